#pragma once

#include <string>

#include "tio/training.hpp"

namespace tio {

// Text config, one "key = value" per line; '#' starts a comment. Unknown
// keys and malformed values are errors. Omitted keys keep their defaults.
TrainConfig parse_train_config(const std::string& text);

// Emits every key; parsing the result reproduces the config exactly.
std::string serialize_train_config(const TrainConfig& cfg);

// Reads the file, then applies the TIO_SEED environment override if set.
TrainConfig load_train_config(const std::string& path);

// FNV-1a over the serialized form; stamped into checkpoint metadata so a
// resumed run can verify it is continuing the same configuration.
uint64_t config_hash(const TrainConfig& cfg);

}  // namespace tio
