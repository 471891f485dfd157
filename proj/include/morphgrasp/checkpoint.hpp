#pragma once

#include "morphgrasp/config.hpp"
#include "morphgrasp/model.hpp"
#include "morphgrasp/params.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <random>

namespace morphgrasp {

// Layout: 8-byte magic, u32 header length, JSON header, then every tensor in
// header order as little-endian float32, column-major.
inline constexpr char kCheckpointMagic[8] = {'M', 'G', 'C', 'K', 'P', 'T', '0', '1'};

void save_checkpoint(const std::filesystem::path& path, const GraspModel& model, const RunConfig& config);
/// Validates dims, config hash and every tensor shape before touching the model.
void load_checkpoint(const std::filesystem::path& path, GraspModel& model, const RunConfig& config);
nlohmann::ordered_json read_checkpoint_header(const std::filesystem::path& path);

/// Full-precision parameters, optimizer moments, step count and RNG state, so
/// a resumed run continues bit for bit.
void save_train_state(const std::filesystem::path& path, const GraspModel& model, const Adam& optimizer,
                      const std::mt19937_64& rng);
void load_train_state(const std::filesystem::path& path, GraspModel& model, Adam& optimizer, std::mt19937_64& rng);

}  // namespace morphgrasp
