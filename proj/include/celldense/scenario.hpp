#pragma once

#include <cstdint>
#include <vector>

#include "celldense/geolocation.hpp"
#include "celldense/grid.hpp"
#include "celldense/rng.hpp"

namespace celldense {

// One network layer: how many towers, their sector fan, and the minimum
// spacing used when throwing tower positions.
struct LayerSpec {
    int tower_count = 0;
    int sectors_per_tower = 3;
    double beamwidth = 2.0 * std::numbers::pi / 3.0;
    double max_range = 1.0;
    double azimuth_offset = 0.0;
    double tx_power = 0.0;
    double min_spacing = 0.0;  // within the layer only
};

// Ground-truth population: four dense square clusters plus a sprinkle of
// moderately populated clutter tiles.
struct GtpSpec {
    int cluster_count = 4;
    int cluster_side = 10;
    long long cluster_intensity = 40;  // devices per cluster tile
    double clutter_fraction = 0.20;    // share of non-cluster tiles that get clutter
    long long clutter_intensity = 6;   // devices per clutter tile
};

struct ScenarioConfig {
    int grid_width = 100;
    int grid_height = 100;
    double tile_size = 1.0;
    std::vector<LayerSpec> layers;
    GtpSpec gtp;
    std::uint64_t seed = 20260819u;
    // Tower layouts leaving tiles outside every flat footprint are redrawn
    // up to this many times (estimation needs every tile covered).
    int max_network_attempts = 50;

    ScenarioConfig() : layers{macro_layer(), micro_layer()} {}

    static LayerSpec macro_layer() {
        return {42, 3, 2.0 * std::numbers::pi / 3.0, 15.0, std::numbers::pi / 5.0, -70.0, 12.0};
    }
    static LayerSpec micro_layer() {
        return {73, 3, 2.0 * std::numbers::pi / 3.0, 6.0, 0.0, -85.0, 7.0};
    }

    Grid grid() const { return Grid(grid_width, grid_height, tile_size); }
    void validate() const;
};

struct GroundTruth {
    std::vector<double> tiles;  // integer-valued device counts
    double total = 0.0;
};

// Seeded tower layout: per layer, dart-throwing with the layer's minimum
// spacing (relaxed by 10% after repeated rejection so generation always
// terminates), then a full-coverage check against the flat footprints with
// deterministic redraws from the same stream.
std::vector<Tower> generate_network(const ScenarioConfig& cfg, RngStream& rng);

// Ground-truth population on the grid: non-overlapping random clusters at
// cluster intensity plus a random subset of the remaining tiles at clutter
// intensity.
GroundTruth generate_gtp(const ScenarioConfig& cfg, RngStream& rng);

// Per-device multinomial assignment: every device in tile j picks a cell
// with the probabilities in column j of P. Total device count is conserved
// exactly.
CountVector sample_counts(const AssignmentMatrix& P, const GroundTruth& gtp, RngStream& rng);

// Best possible estimate for a given partition: each tile gets its
// region's GTP average.
DensityEstimate oracle_partition_average(const GroundTruth& gtp,
                                         const std::vector<int>& section_map,
                                         const std::vector<int>& section_size);

}  // namespace celldense
