#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rp2/classifier.hpp"
#include "rp2/tensor.hpp"

namespace rp2 {

/// On-disk "RPW1" container:
///   "RPW1" | u32 id length | id bytes (UTF-8) | u32 class_count | u32 input_side |
///   per tensor: u32 rank | u32 dims... | little-endian float32 data
/// All integers are little-endian. The tensor count is implied by the id.
struct RpwFile {
  std::string architecture_id;
  std::uint32_t class_count = 0;
  std::uint32_t input_side = 0;
  std::vector<Tensor> tensors;
};

/// Architecture id used for single-tensor perturbation files.
inline constexpr std::string_view kPerturbationArchitecture = "rp2-perturbation";

void write_rpw(const RpwFile& file, const std::filesystem::path& path);
/// `tensor_names` must list one name per expected tensor; errors cite them.
RpwFile read_rpw(const std::filesystem::path& path, const std::vector<std::string>& tensor_names,
                 std::string_view expected_architecture = {});

void save_weights(const ModelParameters& params, const std::filesystem::path& path);
ModelParameters load_weights(const std::filesystem::path& path);

}  // namespace rp2
