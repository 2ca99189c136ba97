#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "rp2/attack.hpp"

namespace rp2 {

/// A perturbation archive directory: delta.rpw, mask.png and meta.json.
struct PerturbationArchive {
  Perturbation perturbation;
  nlohmann::json meta;
};

nlohmann::json to_json(const DistributionConfig& config);
/// Resolved attack settings as recorded in meta.json (no thread count).
nlohmann::json to_json(const AttackConfig& config);

/// `extra` is merged into meta.json after the perturbation's own fields.
void write_archive(const std::filesystem::path& dir, const Perturbation& perturbation,
                   const nlohmann::json& extra = nlohmann::json::object());
/// Throws FormatError on missing or inconsistent members.
PerturbationArchive read_archive(const std::filesystem::path& dir);

}  // namespace rp2
