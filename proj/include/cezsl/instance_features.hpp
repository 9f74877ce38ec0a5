#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cezsl/common.hpp"

namespace cezsl {

struct FrameSequence {
  std::string instance_id;
  Matrix frames;  ///< n x d_frame
};

struct GaussianComponent {
  Vector mean;
  Vector variance;  ///< diagonal
  double weight = 0.0;
};

struct Codebook {
  std::vector<GaussianComponent> components;

  std::size_t size() const { return components.size(); }
  std::size_t frame_dim() const { return components.empty() ? 0 : components.front().mean.size(); }
};

inline constexpr double kVarianceFloor = 1e-6;

struct CodebookConfig {
  std::size_t size = 128;  ///< d^(I) for audio
  std::size_t em_iterations = 50;
  double tolerance = 0.0;  ///< stop early once the log-likelihood gain falls below this (0 = never)
  std::uint64_t seed = 1;
};

struct CodebookFit {
  Codebook codebook;
  std::vector<double> log_likelihood;  ///< mean per-frame log-likelihood before each M-step, then final
};

/// Diagonal-covariance EM with k-means++ seeding of the means.
CodebookFit fit_codebook(const Matrix& frames, const CodebookConfig& config);

/// Weighted (or unweighted) component log-density of a frame.
double component_log_density(std::span<const double> frame, const GaussianComponent& component,
                             bool include_weight = true);

/// Most likely code word, 0-based; ties go to the lowest index.
std::size_t assign_codeword(std::span<const double> frame, const Codebook& codebook, bool include_weight = true);

/// Length-normalised histogram of code-word assignments.
Vector abow(const FrameSequence& frames, const Codebook& codebook, bool include_weight = true);

/// Append first and second temporal differences (central, edges replicated).
Matrix augment_with_deltas(const Matrix& frames);

struct InstanceVector {
  std::string instance_id;
  Vector values;
};

/// Line-delimited {"instance_id", "values"}; every vector must have
/// `expected_dim` finite entries (0 = infer from the first record).
std::vector<InstanceVector> load_vectors(const std::filesystem::path& path, std::size_t expected_dim = 0);
void save_vectors(const std::vector<InstanceVector>& vectors, const std::filesystem::path& path);

/// Line-delimited {"instance_id", "frames": [[...], ...]}.
std::vector<FrameSequence> load_frames(const std::filesystem::path& path);
void save_frames(const std::vector<FrameSequence>& frames, const std::filesystem::path& path);

nlohmann::json to_json(const Codebook& codebook);
Codebook codebook_from_json(const nlohmann::json& j);

}  // namespace cezsl
