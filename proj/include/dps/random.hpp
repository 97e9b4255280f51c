#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace dps {

using Rng = std::mt19937_64;

// Independent named sub-stream of a global seed. The same (seed, tag,
// indices) always yields the same generator, independent of the order in
// which other streams are created.
Rng make_stream(std::uint64_t seed, std::string_view tag, std::initializer_list<std::uint64_t> indices = {});

// 64-bit FNV-1a; also used for config hashes in run manifests.
std::uint64_t fnv1a(std::string_view bytes);

double standard_normal(Rng& rng);

// rows x cols matrix of i.i.d. N(0,1) draws, filled column by column.
Eigen::MatrixXd standard_normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols);

// Vector of i.i.d. +-1 entries.
Eigen::VectorXd rademacher(Rng& rng, Eigen::Index n);

}  // namespace dps
