#include "cosmolod/builder.hpp"
#include "cosmolod/hash.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cosmolod {

std::uint64_t node_seed(std::uint64_t dataset_seed, NodePath path) noexcept
{
    return hash_keys(dataset_seed, path.code);
}

Subsample subsample(std::span<const double> weights, std::span<const std::uint64_t> ids, std::size_t capacity,
                    std::uint64_t seed)
{
    if (weights.size() != ids.size())
        throw std::invalid_argument("subsample: weights and ids differ in length");
    const std::size_t m = weights.size();
    Subsample out;
    if (m <= capacity) {
        out.selected.resize(m);
        std::iota(out.selected.begin(), out.selected.end(), std::size_t{0});
        out.weights.assign(weights.begin(), weights.end());
        return out;
    }

    // log(u^(1/w)) = log(u)/w orders identically and does not underflow.
    std::vector<double> score(m);
    for (std::size_t i = 0; i < m; ++i) {
        if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
            throw std::invalid_argument("subsample: weights must be finite and positive");
        score[i] = std::log(unit_open(hash_combine(seed, ids[i]))) / weights[i];
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto better = [&](std::size_t a, std::size_t b) {
        if (score[a] != score[b])
            return score[a] > score[b];
        return ids[a] < ids[b];
    };
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(capacity), order.end(), better);
    order.resize(capacity);
    std::sort(order.begin(), order.end());

    double total = 0.0, kept = 0.0;
    for (double w : weights)
        total += w;
    for (std::size_t i : order)
        kept += weights[i];
    const double scale = total / kept;

    out.selected = std::move(order);
    out.weights.reserve(capacity);
    for (std::size_t i : out.selected)
        out.weights.push_back(weights[i] * scale);
    return out;
}

} // namespace cosmolod
