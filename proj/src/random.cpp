#include "dps/random.hpp"

#include <vector>

namespace dps {

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

Rng make_stream(std::uint64_t seed, std::string_view tag, std::initializer_list<std::uint64_t> indices) {
    const std::uint64_t tag_hash = fnv1a(tag);
    std::vector<std::uint32_t> words;
    auto push64 = [&](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v & 0xffffffffULL));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push64(seed);
    push64(tag_hash);
    for (std::uint64_t i : indices) push64(i);
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

double standard_normal(Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return n(rng);
}

Eigen::MatrixXd standard_normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
    }
    return m;
}

Eigen::VectorXd rademacher(Rng& rng, Eigen::Index n) {
    std::bernoulli_distribution coin(0.5);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = coin(rng) ? 1.0 : -1.0;
    return v;
}

}  // namespace dps
