#include "celldense/geolocation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace celldense {

namespace {

// Smallest signed angle between a direction and a boresight, in [0, pi].
double angular_offset(double dy, double dx, double azimuth) {
    const double angle = std::atan2(dy, dx);
    double off = std::fmod(angle - azimuth, 2.0 * std::numbers::pi);
    if (off > std::numbers::pi) off -= 2.0 * std::numbers::pi;
    if (off < -std::numbers::pi) off += 2.0 * std::numbers::pi;
    return std::abs(off);
}

std::string sector_cell_id(std::size_t tower, std::size_t sector) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "t%03zu_s%zu", tower, sector);
    return buf;
}

}  // namespace

Footprint sector_footprint_flat(const Tower& tower, const Sector& sector, const Grid& grid) {
    sector.validate();
    Footprint fp;

    // Only tiles inside the bounding box of the range circle can qualify.
    const int x_lo = std::max(0, static_cast<int>(std::floor((tower.x - sector.max_range) / grid.tile_size)));
    const int x_hi = std::min(grid.width - 1, static_cast<int>(std::ceil((tower.x + sector.max_range) / grid.tile_size)));
    const int y_lo = std::max(0, static_cast<int>(std::floor((tower.y - sector.max_range) / grid.tile_size)));
    const int y_hi = std::min(grid.height - 1, static_cast<int>(std::ceil((tower.y + sector.max_range) / grid.tile_size)));

    const int home_x = std::clamp(static_cast<int>(std::floor(tower.x / grid.tile_size)), 0, grid.width - 1);
    const int home_y = std::clamp(static_cast<int>(std::floor(tower.y / grid.tile_size)), 0, grid.height - 1);

    for (int y = y_lo; y <= y_hi; ++y) {
        for (int x = x_lo; x <= x_hi; ++x) {
            const int j = grid.index(x, y);
            if (x == home_x && y == home_y) {
                fp.weights.emplace_back(j, 1.0);
                continue;
            }
            const double dx = grid.center_x(j) - tower.x;
            const double dy = grid.center_y(j) - tower.y;
            if (std::hypot(dx, dy) > sector.max_range) continue;
            if (angular_offset(dy, dx, sector.azimuth) > sector.beamwidth / 2.0) continue;
            fp.weights.emplace_back(j, 1.0);
        }
    }
    return fp;
}

FootprintSet voronoi_partition(const std::vector<std::pair<double, double>>& seeds,
                               const Grid& grid) {
    if (seeds.empty()) throw NoSeeds("voronoi partition needs at least one seed");

    FootprintSet out;
    out.grid = grid;
    out.cells.resize(seeds.size());
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "v%03zu", s);
        out.cells[s].cell_id = buf;
    }

    for (int j = 0; j < grid.tiles(); ++j) {
        const double cx = grid.center_x(j);
        const double cy = grid.center_y(j);
        std::size_t best = 0;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            const double dx = cx - seeds[s].first;
            const double dy = cy - seeds[s].second;
            const double d2 = dx * dx + dy * dy;
            if (d2 < best_d2) {  // strict: equidistant ties keep the lowest index
                best_d2 = d2;
                best = s;
            }
        }
        out.cells[best].weights.emplace_back(j, 1.0);
    }
    return out;
}

double received_dbm(const Tower& tower, const Sector& sector, double x, double y,
                    const PathLossParams& pl) {
    const double dx = x - tower.x;
    const double dy = y - tower.y;
    const double d = std::max(std::hypot(dx, dy), pl.reference_distance);

    double penalty = 0.0;
    // A full-circle sector radiates evenly; otherwise the penalty grows
    // quadratically in the offset, normalized to hit angular_penalty_db at
    // the sector edge, and saturates at the cap (back lobe).
    if (sector.beamwidth < 2.0 * std::numbers::pi) {
        const double off = angular_offset(dy, dx, sector.azimuth);
        const double rel = off / (sector.beamwidth / 2.0);
        penalty = std::min(pl.angular_penalty_db * rel * rel, pl.angular_penalty_cap_db);
    }
    return sector.tx_power - 10.0 * pl.exponent * std::log10(d) - penalty;
}

Footprint signal_dominance(const Tower& tower, const Sector& sector, const Grid& grid,
                           const PathLossParams& pl, const LogisticParams& lg) {
    sector.validate();
    Footprint fp;
    for (int j = 0; j < grid.tiles(); ++j) {
        const double rx = received_dbm(tower, sector, grid.center_x(j), grid.center_y(j), pl);
        const double s = 1.0 / (1.0 + std::exp(-lg.steepness * (rx - lg.midpoint_dbm)));
        if (s >= lg.floor) fp.weights.emplace_back(j, s);
    }
    return fp;
}

FootprintSet flat_footprints(const std::vector<Tower>& towers, const Grid& grid) {
    FootprintSet out;
    out.grid = grid;
    for (std::size_t t = 0; t < towers.size(); ++t) {
        for (std::size_t s = 0; s < towers[t].sectors.size(); ++s) {
            Footprint fp = sector_footprint_flat(towers[t], towers[t].sectors[s], grid);
            fp.cell_id = sector_cell_id(t, s);
            out.cells.push_back(std::move(fp));
        }
    }
    return out;
}

FootprintSet dominance_footprints(const std::vector<Tower>& towers, const Grid& grid,
                                  const PathLossParams& pl, const LogisticParams& lg) {
    FootprintSet out;
    out.grid = grid;
    for (std::size_t t = 0; t < towers.size(); ++t) {
        for (std::size_t s = 0; s < towers[t].sectors.size(); ++s) {
            Footprint fp = signal_dominance(towers[t], towers[t].sectors[s], grid, pl, lg);
            fp.cell_id = sector_cell_id(t, s);
            out.cells.push_back(std::move(fp));
        }
    }
    return out;
}

}  // namespace celldense
