#include "celldense/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace celldense {

namespace {

[[noreturn]] void io_fail(const std::filesystem::path& path, const std::string& what) {
    throw IoError(path.string() + ": " + what);
}

double parse_double(std::string_view s, const std::filesystem::path& path) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        io_fail(path, "bad number '" + std::string(s) + "'");
    return v;
}

long parse_long(std::string_view s, const std::filesystem::path& path) {
    long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        io_fail(path, "bad integer '" + std::string(s) + "'");
    return v;
}

// Splits one CSV line at commas; the formats here never quote fields.
std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

std::vector<std::string> read_lines(const std::filesystem::path& path, std::string_view header) {
    std::ifstream in(path);
    if (!in) io_fail(path, "cannot open for reading");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    if (lines.empty() || lines.front() != header)
        io_fail(path, "expected header '" + std::string(header) + "'");
    lines.erase(lines.begin());
    return lines;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw Error("double formatting failed");
    return std::string(buf, ptr);
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) io_fail(path, "cannot open for writing");
    out << content;
    if (!out) io_fail(path, "write failed");
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) io_fail(path, "cannot open for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_density_csv(const std::filesystem::path& path, std::span<const double> values) {
    std::string out = "tile_index,value\n";
    for (std::size_t j = 0; j < values.size(); ++j) {
        out += std::to_string(j);
        out += ',';
        out += format_double(values[j]);
        out += '\n';
    }
    write_text_file(path, out);
}

std::vector<double> read_density_csv(const std::filesystem::path& path, int tiles) {
    std::vector<double> values(tiles, 0.0);
    for (const auto& line : read_lines(path, "tile_index,value")) {
        const auto fields = split_csv(line);
        if (fields.size() != 2) io_fail(path, "expected 2 fields: '" + line + "'");
        const long j = parse_long(fields[0], path);
        if (j < 0 || j >= tiles) io_fail(path, "tile index out of range: '" + line + "'");
        values[j] = parse_double(fields[1], path);
    }
    return values;
}

void write_counts_csv(const std::filesystem::path& path, const std::vector<std::string>& cell_ids,
                      std::span<const double> values) {
    if (cell_ids.size() != values.size())
        throw DimensionMismatch("one cell id per count expected");
    std::string out = "cell_id,value\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
        out += cell_ids[i];
        out += ',';
        out += format_double(values[i]);
        out += '\n';
    }
    write_text_file(path, out);
}

std::pair<std::vector<std::string>, std::vector<double>> read_counts_csv(
    const std::filesystem::path& path) {
    std::vector<std::string> ids;
    std::vector<double> values;
    for (const auto& line : read_lines(path, "cell_id,value")) {
        const auto fields = split_csv(line);
        if (fields.size() != 2) io_fail(path, "expected 2 fields: '" + line + "'");
        ids.emplace_back(fields[0]);
        values.push_back(parse_double(fields[1], path));
    }
    return {std::move(ids), std::move(values)};
}

void write_footprints_csv(const std::filesystem::path& path, const FootprintSet& footprints) {
    std::string out = "cell_id,tile_index,value\n";
    for (const auto& cell : footprints.cells)
        for (const auto& [tile, s] : cell.weights) {
            out += cell.cell_id;
            out += ',';
            out += std::to_string(tile);
            out += ',';
            out += format_double(s);
            out += '\n';
        }
    write_text_file(path, out);
}

FootprintSet read_footprints_csv(const std::filesystem::path& path, const Grid& grid) {
    FootprintSet set;
    set.grid = grid;
    for (const auto& line : read_lines(path, "cell_id,tile_index,value")) {
        const auto fields = split_csv(line);
        if (fields.size() != 3) io_fail(path, "expected 3 fields: '" + line + "'");
        const std::string id(fields[0]);
        if (set.cells.empty() || set.cells.back().cell_id != id) {
            // Cells appear in contiguous runs; revisiting an id would mean
            // the file was reordered and footprints would silently merge.
            for (const auto& cell : set.cells)
                if (cell.cell_id == id) io_fail(path, "cell '" + id + "' appears twice");
            set.cells.push_back({id, {}});
        }
        const long tile = parse_long(fields[1], path);
        if (tile < 0 || tile >= grid.tiles()) io_fail(path, "tile index out of range: '" + line + "'");
        set.cells.back().weights.emplace_back(static_cast<int>(tile), parse_double(fields[2], path));
    }
    return set;
}

void write_towers_csv(const std::filesystem::path& path, const std::vector<Tower>& towers) {
    std::string out = "tower_id,layer,x,y\n";
    for (std::size_t t = 0; t < towers.size(); ++t) {
        out += std::to_string(t);
        out += ',';
        out += std::to_string(towers[t].layer);
        out += ',';
        out += format_double(towers[t].x);
        out += ',';
        out += format_double(towers[t].y);
        out += '\n';
    }
    write_text_file(path, out);
}

std::vector<Tower> read_towers_csv(const std::filesystem::path& path) {
    std::vector<Tower> towers;
    for (const auto& line : read_lines(path, "tower_id,layer,x,y")) {
        const auto fields = split_csv(line);
        if (fields.size() != 4) io_fail(path, "expected 4 fields: '" + line + "'");
        if (parse_long(fields[0], path) != static_cast<long>(towers.size()))
            io_fail(path, "tower ids must be consecutive from 0");
        Tower t;
        t.layer = static_cast<int>(parse_long(fields[1], path));
        t.x = parse_double(fields[2], path);
        t.y = parse_double(fields[3], path);
        towers.push_back(std::move(t));
    }
    return towers;
}

void write_pgm(const std::filesystem::path& path, const Grid& grid,
               std::span<const double> values) {
    if (static_cast<int>(values.size()) != grid.tiles())
        throw DimensionMismatch("one value per tile expected");
    double top = 0.0;
    for (double v : values) top = std::max(top, v);

    std::string out = "P5\n" + std::to_string(grid.width) + " " + std::to_string(grid.height) +
                      "\n255\n";
    out.reserve(out.size() + values.size());
    for (int y = 0; y < grid.height; ++y)
        for (int x = 0; x < grid.width; ++x) {
            const double v = values[grid.index(x, y)];
            const int level = top > 0.0 ? static_cast<int>(std::lround(255.0 * v / top)) : 0;
            out += static_cast<char>(std::clamp(level, 0, 255));
        }
    write_text_file(path, out);
}

}  // namespace celldense
