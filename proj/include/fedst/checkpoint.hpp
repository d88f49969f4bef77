#pragma once

#include <cstdint>
#include <string>

#include "fedst/protocol.hpp"

namespace fedst {

/// Binary checkpoint: model dimensions, per-client and server tensors (by
/// name), and the normalizer. Carries the config hash of the producing run.
void saveCheckpoint(const std::string& path, const FederatedTrainer& trainer,
                    std::uint64_t config_hash);

/// Restores parameters and normalizer into a trainer built from a compatible
/// configuration. Shape or inventory mismatches raise ConfigError.
void loadCheckpoint(const std::string& path, FederatedTrainer& trainer);

}  // namespace fedst
