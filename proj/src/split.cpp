#include "rcombat/split.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace rcombat {

namespace {

std::array<std::size_t, 3> allocate_counts(std::size_t n,
                                           const std::array<double, 3>& fractions) {
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        double exact = static_cast<double>(n) * fractions[i];
        counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        remainder[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    // Largest-remainder rounding, ties resolved in train/val/test order.
    while (assigned < n) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (remainder[i] > remainder[best] + 1e-12) best = i;
        ++counts[best];
        remainder[best] = -1.0;
        ++assigned;
    }
    return counts;
}

}  // namespace

SplitResult split_dataset(const CohortDataset& dataset,
                          const std::array<double, 3>& fractions,
                          std::uint64_t seed) {
    double total = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(total - 1.0) > 1e-9)
        fail(ErrorCode::ConfigError, "split fractions must sum to 1");
    for (double f : fractions)
        if (f < 0.0) fail(ErrorCode::ConfigError, "negative split fraction");

    std::vector<std::size_t> hc_idx, path_idx;
    for (std::size_t j = 0; j < dataset.subjects.size(); ++j)
        (dataset.subjects[j].healthy() ? hc_idx : path_idx).push_back(j);

    std::mt19937_64 rng(seed);
    std::array<std::vector<std::size_t>, 3> parts;
    for (auto* stratum : {&hc_idx, &path_idx}) {
        if (stratum->empty()) continue;
        if (stratum->size() < 3)
            fail(ErrorCode::StratumTooSmall,
                 "stratum has " + std::to_string(stratum->size()) +
                     " subjects; at least 3 required");
        std::shuffle(stratum->begin(), stratum->end(), rng);
        auto counts = allocate_counts(stratum->size(), fractions);
        std::size_t offset = 0;
        for (int p = 0; p < 3; ++p) {
            for (std::size_t k = 0; k < counts[p]; ++k)
                parts[p].push_back((*stratum)[offset + k]);
            offset += counts[p];
        }
    }

    SplitResult out;
    CohortDataset* targets[3] = {&out.train, &out.val, &out.test};
    for (int p = 0; p < 3; ++p) {
        targets[p]->taxonomy = dataset.taxonomy;
        targets[p]->covariate_names = dataset.covariate_names;
        targets[p]->reference_site = dataset.reference_site;
        std::sort(parts[p].begin(), parts[p].end());
        for (std::size_t j : parts[p])
            targets[p]->subjects.push_back(dataset.subjects[j]);
    }
    return out;
}

}  // namespace rcombat
