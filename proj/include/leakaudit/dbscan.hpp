#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <vector>

namespace leakaudit {

inline constexpr int kNoise = -1;

// Classic DBSCAN over points 0..n-1 visited in index order. `dist(i, j)` is any
// symmetric distance; a point is core when at least `min_pts` points (itself
// included) lie within `eps`. Border points keep the first cluster that reaches
// them. Returns one label per point, clusters numbered in discovery order.
template <class Dist>
std::vector<int> dbscan(std::size_t n, Dist dist, double eps, std::size_t min_pts) {
    std::vector<std::vector<std::size_t>> nbrs(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (dist(i, j) <= eps) nbrs[i].push_back(j);

    constexpr int unvisited = -2;
    std::vector<int> label(n, unvisited);
    int next_cluster = 0;
    for (std::size_t p = 0; p < n; ++p) {
        if (label[p] != unvisited) continue;
        if (nbrs[p].size() < min_pts) {
            label[p] = kNoise;
            continue;
        }
        const int c = next_cluster++;
        label[p] = c;
        std::deque<std::size_t> frontier(nbrs[p].begin(), nbrs[p].end());
        while (!frontier.empty()) {
            const std::size_t q = frontier.front();
            frontier.pop_front();
            if (label[q] == kNoise) label[q] = c;
            if (label[q] != unvisited) continue;
            label[q] = c;
            if (nbrs[q].size() >= min_pts) frontier.insert(frontier.end(), nbrs[q].begin(), nbrs[q].end());
        }
    }
    return label;
}

// Sorted distances from each point to its k-th nearest other point.
template <class Dist>
std::vector<double> k_distances(std::size_t n, Dist dist, std::size_t k) {
    std::vector<double> out;
    if (k == 0 || n <= k) return out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> d;
        d.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) d.push_back(dist(i, j));
        std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
        out.push_back(d[k - 1]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

// Elbow of a sorted k-distance curve: the point of largest second difference.
inline double elbow_value(const std::vector<double>& sorted) {
    if (sorted.empty()) return 0.0;
    if (sorted.size() < 3) return sorted.back();
    std::size_t best = 1;
    double best_curv = -1.0;
    for (std::size_t i = 1; i + 1 < sorted.size(); ++i) {
        const double curv = sorted[i + 1] - 2.0 * sorted[i] + sorted[i - 1];
        if (curv > best_curv) {
            best_curv = curv;
            best = i;
        }
    }
    return sorted[best];
}

}  // namespace leakaudit
