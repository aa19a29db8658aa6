#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "celldense/geolocation.hpp"
#include "celldense/grid.hpp"

namespace celldense {

// Shortest representation that parses back to the identical double, so
// rewriting the same data yields byte-identical files.
std::string format_double(double v);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

// Per-tile maps: header "tile_index,value", one line per tile, zeros kept.
void write_density_csv(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_density_csv(const std::filesystem::path& path, int tiles);

// Per-cell counts: header "cell_id,value".
void write_counts_csv(const std::filesystem::path& path, const std::vector<std::string>& cell_ids,
                      std::span<const double> values);
std::pair<std::vector<std::string>, std::vector<double>> read_counts_csv(
    const std::filesystem::path& path);

// Sparse footprints / matrices: header "cell_id,tile_index,value", grouped
// by cell in file order.
void write_footprints_csv(const std::filesystem::path& path, const FootprintSet& footprints);
FootprintSet read_footprints_csv(const std::filesystem::path& path, const Grid& grid);

// Towers: header "tower_id,layer,x,y". Sector fans are rebuilt from the
// layer templates in the config echo, so they are not stored here.
void write_towers_csv(const std::filesystem::path& path, const std::vector<Tower>& towers);
// Returns (layer, x, y) per tower; sectors are left empty for the caller.
std::vector<Tower> read_towers_csv(const std::filesystem::path& path);

// Binary 8-bit grayscale raster (P5), linearly scaled so the map maximum is
// white; an all-zero map comes out all black. Row 0 of the grid is the top
// image row.
void write_pgm(const std::filesystem::path& path, const Grid& grid,
               std::span<const double> values);

}  // namespace celldense
