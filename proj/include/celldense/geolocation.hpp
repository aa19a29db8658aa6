#pragma once

#include <numbers>
#include <utility>
#include <vector>

#include "celldense/grid.hpp"

namespace celldense {

// One antenna sector. azimuth is the boresight direction in radians
// (counterclockwise from +x), beamwidth the full angular opening.
struct Sector {
    double azimuth = 0.0;
    double beamwidth = 2.0 * std::numbers::pi / 3.0;
    double max_range = 1.0;   // tile units
    double tx_power = 0.0;    // dBm, used by the signal-dominance model only

    void validate() const {
        if (!(beamwidth > 0.0) || beamwidth > 2.0 * std::numbers::pi + 1e-12)
            throw Error("sector beamwidth must be in (0, 2*pi]");
        if (!(max_range > 0.0)) throw Error("sector max_range must be positive");
    }
};

struct Tower {
    double x = 0.0;
    double y = 0.0;
    int layer = 0;
    std::vector<Sector> sectors;
};

// Log-distance path loss with a quadratic angular penalty. Defaults are
// this artifact's own calibration; the model shape is standard, the
// constants are not taken from anywhere.
struct PathLossParams {
    double exponent = 3.8;
    double reference_distance = 0.1;    // tile units; distances clamp up to this
    double angular_penalty_db = 12.0;   // penalty at the half-beamwidth edge
    double angular_penalty_cap_db = 20.0;
};

struct LogisticParams {
    double midpoint_dbm = -92.5;
    double steepness = 0.2;
    double floor = 0.01;  // strengths below this are dropped from the footprint
};

// Binary footprint: tile centers within max_range of the tower and within
// half a beamwidth of the azimuth. The tile containing the tower is always
// included (the angular offset is undefined at distance zero).
Footprint sector_footprint_flat(const Tower& tower, const Sector& sector, const Grid& grid);

// Nearest-seed partition of the grid by tile-center distance. Equidistant
// ties go to the lowest seed index so runs stay reproducible.
FootprintSet voronoi_partition(const std::vector<std::pair<double, double>>& seeds,
                               const Grid& grid);

// Received strength mapped through a logistic into a soft coverage degree
// in (0, 1]; values below lg.floor are dropped to keep the footprint sparse.
Footprint signal_dominance(const Tower& tower, const Sector& sector, const Grid& grid,
                           const PathLossParams& pl, const LogisticParams& lg);

// Received power in dBm at a point, before the logistic. Exposed so tests
// can pin the cutoff distance.
double received_dbm(const Tower& tower, const Sector& sector, double x, double y,
                    const PathLossParams& pl);

// FootprintSets over a whole network, one cell per (tower, sector) in
// tower-major order with cell ids like "t003_s1".
FootprintSet flat_footprints(const std::vector<Tower>& towers, const Grid& grid);
FootprintSet dominance_footprints(const std::vector<Tower>& towers, const Grid& grid,
                                  const PathLossParams& pl, const LogisticParams& lg);

}  // namespace celldense
