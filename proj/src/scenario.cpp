#include "celldense/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace celldense {

void ScenarioConfig::validate() const {
    if (grid_width < 1 || grid_height < 1 || !(tile_size > 0.0))
        throw ConfigError("grid dimensions and tile size must be positive");
    if (layers.empty()) throw ConfigError("at least one network layer is required");
    for (const auto& l : layers) {
        if (l.tower_count < 1) throw ConfigError("layer tower_count must be positive");
        if (l.sectors_per_tower < 1) throw ConfigError("layer needs at least one sector");
        if (!(l.max_range > 0.0)) throw ConfigError("layer max_range must be positive");
        if (!(l.beamwidth > 0.0)) throw ConfigError("layer beamwidth must be positive");
        if (l.min_spacing < 0.0) throw ConfigError("layer min_spacing must be nonnegative");
    }
    if (gtp.cluster_count < 0 || gtp.cluster_side < 1 || gtp.cluster_intensity < 0 ||
        gtp.clutter_intensity < 0 || gtp.clutter_fraction < 0.0 || gtp.clutter_fraction > 1.0)
        throw ConfigError("ground-truth parameters out of range");
    if (max_network_attempts < 1) throw ConfigError("max_network_attempts must be positive");
}

namespace {

std::vector<Tower> throw_layer(const LayerSpec& layer, int layer_tag, const Grid& grid,
                               RngStream& rng) {
    std::vector<Tower> towers;
    towers.reserve(layer.tower_count);
    double spacing = layer.min_spacing;
    int consecutive_rejects = 0;
    while (static_cast<int>(towers.size()) < layer.tower_count) {
        const double x = rng.uniform(0.0, grid.width * grid.tile_size);
        const double y = rng.uniform(0.0, grid.height * grid.tile_size);
        bool ok = true;
        for (const auto& t : towers) {
            if (std::hypot(t.x - x, t.y - y) < spacing) {
                ok = false;
                break;
            }
        }
        if (!ok) {
            // A layout can wedge itself; relaxing the spacing a little keeps
            // generation total while preserving the dispersed look.
            if (++consecutive_rejects >= 200) {
                spacing *= 0.9;
                consecutive_rejects = 0;
            }
            continue;
        }
        consecutive_rejects = 0;
        Tower t;
        t.x = x;
        t.y = y;
        t.layer = layer_tag;
        t.sectors.reserve(layer.sectors_per_tower);
        for (int k = 0; k < layer.sectors_per_tower; ++k) {
            Sector s;
            s.azimuth = layer.azimuth_offset +
                        2.0 * std::numbers::pi * k / layer.sectors_per_tower;
            s.beamwidth = layer.beamwidth;
            s.max_range = layer.max_range;
            s.tx_power = layer.tx_power;
            t.sectors.push_back(s);
        }
        towers.push_back(std::move(t));
    }
    return towers;
}

}  // namespace

std::vector<Tower> generate_network(const ScenarioConfig& cfg, RngStream& rng) {
    cfg.validate();
    const Grid grid = cfg.grid();
    for (int attempt = 0; attempt < cfg.max_network_attempts; ++attempt) {
        std::vector<Tower> towers;
        for (std::size_t l = 0; l < cfg.layers.size(); ++l) {
            std::vector<Tower> layer = throw_layer(cfg.layers[l], static_cast<int>(l), grid, rng);
            towers.insert(towers.end(), std::make_move_iterator(layer.begin()),
                          std::make_move_iterator(layer.end()));
        }
        if (flat_footprints(towers, grid).uncovered_tiles().empty()) return towers;
    }
    throw Error("could not cover every tile in " + std::to_string(cfg.max_network_attempts) +
                " layouts; increase tower counts or ranges");
}

GroundTruth generate_gtp(const ScenarioConfig& cfg, RngStream& rng) {
    cfg.validate();
    const Grid grid = cfg.grid();
    const GtpSpec& spec = cfg.gtp;
    if (spec.cluster_count > 0 &&
        (spec.cluster_side > grid.width || spec.cluster_side > grid.height))
        throw ClustersDontFit("cluster side exceeds the grid");

    GroundTruth gtp;
    gtp.tiles.assign(grid.tiles(), 0.0);

    // Clusters: uniformly random top-left corners, rejected on overlap.
    struct Box {
        int x, y;
    };
    std::vector<Box> boxes;
    const int max_x = grid.width - spec.cluster_side;
    const int max_y = grid.height - spec.cluster_side;
    int tries = 0;
    while (static_cast<int>(boxes.size()) < spec.cluster_count) {
        if (++tries > 1000)
            throw ClustersDontFit("could not place non-overlapping clusters after 1000 draws");
        Box b{static_cast<int>(rng.uniform_index(max_x + 1)),
              static_cast<int>(rng.uniform_index(max_y + 1))};
        bool overlaps = false;
        for (const auto& other : boxes) {
            if (std::abs(b.x - other.x) < spec.cluster_side &&
                std::abs(b.y - other.y) < spec.cluster_side) {
                overlaps = true;
                break;
            }
        }
        if (!overlaps) boxes.push_back(b);
    }
    for (const auto& b : boxes)
        for (int dy = 0; dy < spec.cluster_side; ++dy)
            for (int dx = 0; dx < spec.cluster_side; ++dx)
                gtp.tiles[grid.index(b.x + dx, b.y + dy)] =
                    static_cast<double>(spec.cluster_intensity);

    // Clutter: a uniform subset of the tiles outside every cluster, chosen
    // by a partial shuffle so the draw is exact, not Bernoulli.
    std::vector<int> rest;
    rest.reserve(grid.tiles());
    for (int j = 0; j < grid.tiles(); ++j)
        if (gtp.tiles[j] == 0.0) rest.push_back(j);
    const auto clutter_tiles =
        static_cast<std::size_t>(spec.clutter_fraction * static_cast<double>(rest.size()));
    for (std::size_t k = 0; k < clutter_tiles; ++k) {
        const std::size_t pick = k + rng.uniform_index(rest.size() - k);
        std::swap(rest[k], rest[pick]);
        gtp.tiles[rest[k]] = static_cast<double>(spec.clutter_intensity);
    }

    gtp.total = std::accumulate(gtp.tiles.begin(), gtp.tiles.end(), 0.0);
    return gtp;
}

CountVector sample_counts(const AssignmentMatrix& P, const GroundTruth& gtp, RngStream& rng) {
    if (static_cast<int>(gtp.tiles.size()) != P.cols())
        throw DimensionMismatch("ground truth must have one tile per matrix column");
    std::vector<double> counts(P.rows(), 0.0);
    for (int j = 0; j < P.cols(); ++j) {
        const auto devices = static_cast<long long>(std::llround(gtp.tiles[j]));
        if (devices == 0) continue;
        const auto column = P.column(j);
        for (long long dev = 0; dev < devices; ++dev) {
            const double r = rng.uniform();
            double cum = 0.0;
            int cell = column.back().index;  // roundoff in the last step lands here
            for (const auto& e : column) {
                cum += e.value;
                if (r < cum) {
                    cell = e.index;
                    break;
                }
            }
            counts[cell] += 1.0;
        }
    }
    return CountVector(std::move(counts));
}

DensityEstimate oracle_partition_average(const GroundTruth& gtp,
                                         const std::vector<int>& section_map,
                                         const std::vector<int>& section_size) {
    if (gtp.tiles.size() != section_map.size())
        throw DimensionMismatch("section map must cover every tile");
    std::vector<double> sums(section_size.size(), 0.0);
    for (std::size_t j = 0; j < section_map.size(); ++j) {
        const int s = section_map[j];
        if (s < 0 || s >= static_cast<int>(section_size.size()))
            throw DimensionMismatch("section map entry out of range");
        sums[s] += gtp.tiles[j];
    }
    DensityEstimate est =
        make_density_estimate(disaggregate(sums, section_map, section_size), "oracle");
    est.iterations = 0;
    return est;
}

}  // namespace celldense
