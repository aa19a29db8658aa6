// Pipeline driver: generate synthetic scenarios, run the density
// estimators, and score the resulting maps against the ground truth.
//
// celldense generate|estimate|evaluate|toy|bench
//     [--config FILE] [--seed N] [--out DIR] [--parallel]
//     [--allow-nonconverged] [--print-defaults]
//
// All knobs live in one INI config ([run], [scenario], [em], [map]
// sections); every command is deterministic given (config, seed).
// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "celldense/estimators.hpp"
#include "celldense/geolocation.hpp"
#include "celldense/grid.hpp"
#include "celldense/io.hpp"
#include "celldense/kwd.hpp"
#include "celldense/scenario.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace celldense;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double secs_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct RunConfig {
    // [run]
    std::string mode = "of";  // voronoi | of | ov
    std::string estimators = "sb,em,df";
    std::string prior = "flat";  // flat | file
    std::string prior_file;
    int kwd_l = 4;

    // [scenario]
    ScenarioConfig scenario;

    // [em] / [map]
    EmConfig em;
    MapConfig map;

    // command line only
    fs::path out = "out";
    bool parallel = false;
    bool allow_nonconverged = false;

    std::vector<std::string> estimator_list() const {
        std::vector<std::string> names;
        std::string item;
        std::istringstream stream(estimators);
        while (std::getline(stream, item, ',')) {
            while (!item.empty() && item.front() == ' ') item.erase(item.begin());
            while (!item.empty() && item.back() == ' ') item.pop_back();
            if (!item.empty()) names.push_back(item);
        }
        if (names.empty()) throw ConfigError("estimator list is empty");
        for (const auto& n : names)
            if (n != "sb" && n != "em" && n != "map" && n != "amap" && n != "df")
                throw ConfigError("unknown estimator '" + n + "'");
        return names;
    }

    void validate() const {
        if (mode != "voronoi" && mode != "of" && mode != "ov")
            throw ConfigError("mode must be voronoi, of, or ov");
        if (prior != "flat" && prior != "file")
            throw ConfigError("prior must be flat or file");
        if (prior == "file" && prior_file.empty())
            throw ConfigError("prior = file requires prior_file");
        if (kwd_l < 1) throw ConfigError("kwd_l must be at least 1");
        estimator_list();
        scenario.validate();
    }
};

// INI reader for the config format below: [section] headers, key = value
// lines, # or ; comments, optional double quotes around values. Unknown
// keys are config errors so typos surface instead of silently reverting
// to defaults.
void apply_config_file(const fs::path& path, RunConfig& cfg) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
    std::istringstream stream(read_text_file(path));

    auto fail = [&](int line, const std::string& what) {
        throw ConfigError(path.string() + ":" + std::to_string(line) + ": " + what);
    };
    auto to_ll = [&](const std::string& v, int line) {
        std::size_t used = 0;
        long long parsed = 0;
        try {
            parsed = std::stoll(v, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != v.size()) fail(line, "expected an integer, got '" + v + "'");
        return parsed;
    };
    auto to_int = [&](const std::string& v, int line) {
        return static_cast<int>(to_ll(v, line));
    };
    auto to_double = [&](const std::string& v, int line) {
        std::size_t used = 0;
        double parsed = 0.0;
        try {
            parsed = std::stod(v, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != v.size()) fail(line, "expected a number, got '" + v + "'");
        return parsed;
    };

    std::string section;
    std::string raw;
    int line = 0;
    while (std::getline(stream, raw)) {
        ++line;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        std::string text = raw.substr(0, std::min(raw.find('#'), raw.find(';')));
        auto first = text.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        auto last = text.find_last_not_of(" \t");
        text = text.substr(first, last - first + 1);

        if (text.front() == '[') {
            if (text.back() != ']') fail(line, "unterminated section header");
            section = text.substr(1, text.size() - 2);
            continue;
        }
        auto eq = text.find('=');
        if (eq == std::string::npos) fail(line, "expected key = value");
        std::string key = text.substr(0, text.find_last_not_of(" \t", eq - 1) + 1);
        std::string value = text.substr(eq + 1);
        auto vfirst = value.find_first_not_of(" \t");
        value = vfirst == std::string::npos ? "" : value.substr(vfirst);
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);

        const std::string full = section + "." + key;
        auto& sc = cfg.scenario;
        if (full == "run.mode") cfg.mode = value;
        else if (full == "run.estimators") cfg.estimators = value;
        else if (full == "run.prior") cfg.prior = value;
        else if (full == "run.prior_file") cfg.prior_file = value;
        else if (full == "run.kwd_l") cfg.kwd_l = to_int(value, line);
        else if (full == "scenario.grid_width") sc.grid_width = to_int(value, line);
        else if (full == "scenario.grid_height") sc.grid_height = to_int(value, line);
        else if (full == "scenario.tile_size") sc.tile_size = to_double(value, line);
        else if (full == "scenario.seed") sc.seed = static_cast<std::uint64_t>(to_ll(value, line));
        else if (full == "scenario.macro_towers") sc.layers[0].tower_count = to_int(value, line);
        else if (full == "scenario.micro_towers") sc.layers[1].tower_count = to_int(value, line);
        else if (full == "scenario.cluster_count") sc.gtp.cluster_count = to_int(value, line);
        else if (full == "scenario.cluster_side") sc.gtp.cluster_side = to_int(value, line);
        else if (full == "scenario.cluster_intensity") sc.gtp.cluster_intensity = to_ll(value, line);
        else if (full == "scenario.clutter_fraction") sc.gtp.clutter_fraction = to_double(value, line);
        else if (full == "scenario.clutter_intensity") sc.gtp.clutter_intensity = to_ll(value, line);
        else if (full == "em.max_iters") cfg.em.max_iters = to_int(value, line);
        else if (full == "em.tol") cfg.em.tol = to_double(value, line);
        else if (full == "em.tol_ml") cfg.em.tol_ml = to_double(value, line);
        else if (full == "map.max_iters") cfg.map.max_iters = to_int(value, line);
        else if (full == "map.tol") cfg.map.tol = to_double(value, line);
        else if (full == "map.initial_step") cfg.map.initial_step = to_double(value, line);
        else fail(line, "unknown key '" + full + "'");
    }
}

// Effective configuration in the INI dialect apply_config_file reads, so
// the echo a run leaves behind reproduces that run when passed back in.
std::string config_echo(const RunConfig& cfg) {
    std::ostringstream out;
    out << "[run]\n";
    out << "mode = \"" << cfg.mode << "\"\n";
    out << "estimators = \"" << cfg.estimators << "\"\n";
    out << "prior = \"" << cfg.prior << "\"\n";
    if (!cfg.prior_file.empty()) out << "prior_file = \"" << cfg.prior_file << "\"\n";
    out << "kwd_l = " << cfg.kwd_l << "\n";
    const auto& sc = cfg.scenario;
    out << "\n[scenario]\n";
    out << "grid_width = " << sc.grid_width << "\n";
    out << "grid_height = " << sc.grid_height << "\n";
    out << "tile_size = " << format_double(sc.tile_size) << "\n";
    out << "seed = " << sc.seed << "\n";
    out << "macro_towers = " << sc.layers[0].tower_count << "\n";
    out << "micro_towers = " << sc.layers[1].tower_count << "\n";
    out << "cluster_count = " << sc.gtp.cluster_count << "\n";
    out << "cluster_side = " << sc.gtp.cluster_side << "\n";
    out << "cluster_intensity = " << sc.gtp.cluster_intensity << "\n";
    out << "clutter_fraction = " << format_double(sc.gtp.clutter_fraction) << "\n";
    out << "clutter_intensity = " << sc.gtp.clutter_intensity << "\n";
    out << "\n[em]\n";
    out << "max_iters = " << cfg.em.max_iters << "\n";
    out << "tol = " << format_double(cfg.em.tol) << "\n";
    out << "tol_ml = " << format_double(cfg.em.tol_ml) << "\n";
    out << "\n[map]\n";
    out << "max_iters = " << cfg.map.max_iters << "\n";
    out << "tol = " << format_double(cfg.map.tol) << "\n";
    out << "initial_step = " << format_double(cfg.map.initial_step) << "\n";
    return out.str();
}

// All options sit on the root app so one INI file (sections = the dotted
// prefixes) configures every command the same way.
void bind_options(CLI::App& app, RunConfig& cfg, std::optional<std::uint64_t>& seed_override,
                  bool& print_defaults, std::string& config_path) {
    // The config file is applied before this parse (see main), so command
    // line values override it; the option here documents it and keeps
    // CLI11 from rejecting the flag.
    app.add_option("--config", config_path,
                   "INI config file; sections [run], [scenario], [em], [map]");
    app.add_flag("--print-defaults", print_defaults,
                 "Print the effective config and exit");
    app.add_option("--out", cfg.out, "Output directory (created if missing)")
        ->capture_default_str();
    app.add_option("--seed", seed_override, "Override the scenario seed");
    app.add_flag("--parallel", cfg.parallel, "Run independent estimators concurrently");
    app.add_flag("--allow-nonconverged", cfg.allow_nonconverged,
                 "Exit 0 even when an iterative estimator hits its iteration cap");

    app.add_option("--run.mode", cfg.mode, "Geolocation model: voronoi, of, or ov")
        ->capture_default_str();
    app.add_option("--run.estimators", cfg.estimators,
                   "Comma-separated subset of sb,em,map,amap,df")
        ->capture_default_str();
    app.add_option("--run.prior", cfg.prior, "Prior mode: flat or file")->capture_default_str();
    app.add_option("--run.prior_file", cfg.prior_file, "Density CSV with prior tile weights")
        ->capture_default_str();
    app.add_option("--run.kwd_l", cfg.kwd_l, "Lattice neighborhood radius for the KWD solver")
        ->capture_default_str();

    auto& sc = cfg.scenario;
    app.add_option("--scenario.grid_width", sc.grid_width)->capture_default_str();
    app.add_option("--scenario.grid_height", sc.grid_height)->capture_default_str();
    app.add_option("--scenario.tile_size", sc.tile_size)->capture_default_str();
    app.add_option("--scenario.seed", sc.seed)->capture_default_str();
    app.add_option("--scenario.macro_towers", sc.layers[0].tower_count)->capture_default_str();
    app.add_option("--scenario.micro_towers", sc.layers[1].tower_count)->capture_default_str();
    auto& gtp = sc.gtp;
    app.add_option("--scenario.cluster_count", gtp.cluster_count)->capture_default_str();
    app.add_option("--scenario.cluster_side", gtp.cluster_side)->capture_default_str();
    app.add_option("--scenario.cluster_intensity", gtp.cluster_intensity)->capture_default_str();
    app.add_option("--scenario.clutter_fraction", gtp.clutter_fraction)->capture_default_str();
    app.add_option("--scenario.clutter_intensity", gtp.clutter_intensity)->capture_default_str();

    app.add_option("--em.max_iters", cfg.em.max_iters)->capture_default_str();
    app.add_option("--em.tol", cfg.em.tol)->capture_default_str();
    app.add_option("--em.tol_ml", cfg.em.tol_ml)->capture_default_str();

    app.add_option("--map.max_iters", cfg.map.max_iters)->capture_default_str();
    app.add_option("--map.tol", cfg.map.tol)->capture_default_str();
    app.add_option("--map.initial_step", cfg.map.initial_step)->capture_default_str();
}

// Footprint model selected by cfg.mode. For "voronoi" each tower is one
// cell (its nearest-tower polygon); for "of"/"ov" each (tower, sector) is.
FootprintSet build_footprints(const RunConfig& cfg, const std::vector<Tower>& towers,
                              const Grid& grid) {
    if (cfg.mode == "voronoi") {
        std::vector<std::pair<double, double>> seeds;
        seeds.reserve(towers.size());
        for (const auto& t : towers) seeds.emplace_back(t.x, t.y);
        auto set = voronoi_partition(seeds, grid);
        for (std::size_t i = 0; i < set.cells.size(); ++i) {
            char id[16];
            std::snprintf(id, sizeof id, "t%03zu", i);
            set.cells[i].cell_id = id;
        }
        return set;
    }
    if (cfg.mode == "of") return flat_footprints(towers, grid);
    return dominance_footprints(towers, grid, PathLossParams{}, LogisticParams{});
}

// Towers as dumped carry no sector fans; rebuild them from the layer specs
// the same way generate_network does.
void attach_sectors(const RunConfig& cfg, std::vector<Tower>& towers) {
    for (auto& t : towers) {
        if (t.layer < 0 || t.layer >= static_cast<int>(cfg.scenario.layers.size()))
            throw ConfigError("tower layer " + std::to_string(t.layer) +
                              " has no layer spec in the config");
        const auto& spec = cfg.scenario.layers[t.layer];
        t.sectors.clear();
        for (int s = 0; s < spec.sectors_per_tower; ++s) {
            Sector sec;
            sec.azimuth = spec.azimuth_offset +
                          2.0 * std::numbers::pi * s / spec.sectors_per_tower;
            sec.beamwidth = spec.beamwidth;
            sec.max_range = spec.max_range;
            sec.tx_power = spec.tx_power;
            t.sectors.push_back(sec);
        }
    }
}

PriorVector load_prior(const RunConfig& cfg, int tiles) {
    if (cfg.prior == "file")
        return PriorVector(read_density_csv(cfg.prior_file, tiles));
    return PriorVector::flat(tiles);
}

std::vector<double> rescale_to(std::vector<double> map, double target) {
    double mass = 0.0;
    for (double v : map) mass += v;
    if (mass > 0.0)
        for (double& v : map) v *= target / mass;
    return map;
}

// ---------------------------------------------------------------------------
// generate

int cmd_generate(const RunConfig& cfg, const std::string& config_echo) {
    fs::create_directories(cfg.out);
    const Grid grid = cfg.scenario.grid();

    RngStream net_rng(cfg.scenario.seed, "network");
    auto towers = generate_network(cfg.scenario, net_rng);
    RngStream gtp_rng(cfg.scenario.seed, "gtp");
    auto gtp = generate_gtp(cfg.scenario, gtp_rng);

    auto footprints = build_footprints(cfg, towers, grid);
    auto P = build_assignment_matrix(footprints);
    RngStream asg_rng(cfg.scenario.seed, "assignment");
    auto counts = sample_counts(P, gtp, asg_rng);

    write_text_file(cfg.out / "scenario.ini", config_echo);
    write_towers_csv(cfg.out / "towers.csv", towers);
    write_density_csv(cfg.out / "gtp.csv", gtp.tiles);
    write_counts_csv(cfg.out / "counts.csv", P.cell_ids(), counts.values());

    std::printf("generate: %zu towers, %d cells, gtp mass %s -> %s\n", towers.size(), P.rows(),
                format_double(gtp.total).c_str(), cfg.out.string().c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateRun {
    DensityEstimate sections;     // over consolidated sections
    std::vector<double> tiles;    // disaggregated map
    double seconds = 0.0;
    bool cache_hit = false;
};

EstimateRun run_estimator(const std::string& name, const RunConfig& cfg,
                          const AssignmentMatrix& P, const CountVector& counts,
                          const PriorVector& prior) {
    auto start = Clock::now();
    EstimateRun run;
    if (name == "sb") {
        run.sections = sb_estimate(P, counts, prior);
    } else if (name == "em") {
        run.sections = em_estimate(P, counts, prior, cfg.em);
    } else if (name == "map") {
        run.sections = map_estimate(P, counts, prior, cfg.map);
    } else if (name == "amap") {
        run.sections = approx_map_estimate(P, counts, prior, cfg.map);
    } else {  // df, with the operator cached on disk keyed by its inputs
        char key[48];
        std::snprintf(key, sizeof key, "df_operator_%016llx.bin",
                      static_cast<unsigned long long>(df_fingerprint(P, prior)));
        const fs::path cache = cfg.out / key;
        DfOperator op;
        if (fs::exists(cache)) {
            std::ifstream in(cache, std::ios::binary);
            op = DfOperator::load(in);
            run.cache_hit = true;
        } else {
            op = df_precompute(P, prior);
            std::ofstream out(cache, std::ios::binary);
            if (!out) throw IoError("cannot write " + cache.string());
            op.save(out);
        }
        run.sections = df_estimate(op, counts, true);
    }
    run.seconds = secs_since(start);
    return run;
}

int cmd_estimate(const RunConfig& cfg) {
    const Grid grid = cfg.scenario.grid();
    const auto names = cfg.estimator_list();

    // The dump is the matrix authority: explicit footprints win over
    // rebuilding from towers, so hand-built fixtures work unchanged.
    FootprintSet footprints;
    if (fs::exists(cfg.out / "footprints.csv")) {
        footprints = read_footprints_csv(cfg.out / "footprints.csv", grid);
    } else {
        auto towers = read_towers_csv(cfg.out / "towers.csv");
        attach_sectors(cfg, towers);
        footprints = build_footprints(cfg, towers, grid);
    }
    auto P = build_assignment_matrix(footprints);

    auto [cell_ids, raw_counts] = read_counts_csv(cfg.out / "counts.csv");
    if (static_cast<int>(raw_counts.size()) != P.rows())
        throw DimensionMismatch("counts.csv has " + std::to_string(raw_counts.size()) +
                                " cells, the footprint model has " + std::to_string(P.rows()));
    CountVector counts(std::move(raw_counts));

    auto prior = load_prior(cfg, grid.tiles());
    auto cons = consolidate(P, prior);
    PriorVector section_prior(cons.section_prior);

    std::vector<EstimateRun> runs(names.size());
    auto worker = [&](std::size_t k) {
        return run_estimator(names[k], cfg, cons.matrix, counts, section_prior);
    };
    if (cfg.parallel) {
        std::vector<std::future<EstimateRun>> futures;
        for (std::size_t k = 0; k < names.size(); ++k)
            futures.push_back(std::async(std::launch::async, worker, k));
        for (std::size_t k = 0; k < names.size(); ++k) runs[k] = futures[k].get();
    } else {
        for (std::size_t k = 0; k < names.size(); ++k) runs[k] = worker(k);
    }

    json report;
    report["sections"] = cons.matrix.cols();
    report["tiles"] = grid.tiles();
    report["cells"] = P.rows();
    report["count_total"] = counts.total();
    bool all_converged = true;
    for (std::size_t k = 0; k < names.size(); ++k) {
        auto& run = runs[k];
        run.tiles = disaggregate(run.sections.values, cons.section_map, cons.section_size);
        write_density_csv(cfg.out / (names[k] + ".csv"), run.tiles);

        json row;
        row["estimator"] = names[k];
        row["iterations"] = run.sections.iterations;
        row["converged"] = run.sections.converged;
        row["mass"] = run.sections.mass;
        row["seconds"] = run.seconds;
        if (std::isfinite(run.sections.ml_residual))
            row["ml_residual"] = run.sections.ml_residual;
        if (std::isfinite(run.sections.constraint_residual)) {
            row["constraint_residual"] = run.sections.constraint_residual;
            row["clip_count"] = run.sections.clip_count;
        }
        if (run.cache_hit) row["operator_cache"] = "hit";
        report["estimators"].push_back(row);

        std::printf("estimate: %-4s iters=%-6d converged=%d mass=%.6g %5.2fs%s\n",
                    names[k].c_str(), run.sections.iterations, int(run.sections.converged),
                    run.sections.mass, run.seconds, run.cache_hit ? "  (cache hit)" : "");
        if (!run.sections.converged) all_converged = false;
    }
    write_text_file(cfg.out / "estimate_report.json", report.dump(2) + "\n");

    if (!all_converged && !cfg.allow_nonconverged) {
        std::fprintf(stderr,
                     "estimate: an estimator stopped before reaching its tolerance; rerun "
                     "with --allow-nonconverged to accept the last iterate\n");
        return 3;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate

int cmd_evaluate(const RunConfig& cfg) {
    const Grid grid = cfg.scenario.grid();
    auto reference = read_density_csv(cfg.out / "gtp.csv", grid.tiles());
    GroundTruth gtp;
    gtp.tiles = reference;
    for (double v : reference) gtp.total += v;

    std::vector<std::pair<std::string, std::vector<double>>> estimates;
    estimates.emplace_back("gtp", reference);

    for (const char* name : {"sb", "em", "map", "amap", "df"}) {
        const fs::path csv = cfg.out / (std::string(name) + ".csv");
        if (fs::exists(csv)) estimates.emplace_back(name, read_density_csv(csv, grid.tiles()));
    }

    // With the scenario dump at hand the table also gets the tessellation
    // baseline and the per-partition oracle rows.
    const bool have_dump =
        fs::exists(cfg.out / "towers.csv") && fs::exists(cfg.out / "counts.csv");
    if (have_dump) {
        auto towers = read_towers_csv(cfg.out / "towers.csv");
        attach_sectors(cfg, towers);
        auto [cell_ids, raw_counts] = read_counts_csv(cfg.out / "counts.csv");

        std::vector<std::pair<double, double>> seeds;
        for (const auto& t : towers) seeds.emplace_back(t.x, t.y);
        auto vor = voronoi_partition(seeds, grid);
        auto T = build_assignment_matrix(vor);

        // Tower totals: sum the dumped per-cell counts by tower id prefix
        // ("tNNN" or "tNNN_sK"), so any sector layout folds correctly.
        std::vector<double> tower_counts(towers.size(), 0.0);
        for (std::size_t i = 0; i < cell_ids.size(); ++i) {
            const auto& id = cell_ids[i];
            if (id.size() < 4 || id[0] != 't')
                throw IoError("cell id '" + id + "' does not name a tower");
            const int tower = std::stoi(id.substr(1, id.find('_') - 1));
            if (tower < 0 || tower >= static_cast<int>(towers.size()))
                throw IoError("cell id '" + id + "' is outside the tower dump");
            tower_counts[tower] += raw_counts[i];
        }
        auto vor_est =
            sb_estimate(T, CountVector(std::move(tower_counts)), PriorVector::flat(T.cols()));
        estimates.emplace_back("voronoi", vor_est.values);

        std::vector<int> vor_map(grid.tiles(), -1);
        std::vector<int> vor_size(towers.size(), 0);
        for (std::size_t c = 0; c < vor.cells.size(); ++c)
            for (const auto& [tile, strength] : vor.cells[c].weights) {
                (void)strength;
                vor_map[tile] = static_cast<int>(c);
                vor_size[c]++;
            }
        estimates.emplace_back("oracle-voronoi",
                               oracle_partition_average(gtp, vor_map, vor_size).values);

        auto footprints = fs::exists(cfg.out / "footprints.csv")
                              ? read_footprints_csv(cfg.out / "footprints.csv", grid)
                              : build_footprints(cfg, towers, grid);
        auto P = build_assignment_matrix(footprints);
        auto cons = consolidate(P, load_prior(cfg, grid.tiles()));
        std::vector<int> sec_size(cons.matrix.cols(), 0);
        for (int s : cons.section_map) sec_size[s]++;
        estimates.emplace_back("oracle-sections",
                               oracle_partition_average(gtp, cons.section_map, sec_size).values);
    }

    // Estimator masses can drift from the reference (clipping, priors read
    // from file); KWD needs balanced masses, so align them here and say so.
    std::vector<std::string> notes;
    for (auto& [name, map] : estimates) {
        double mass = 0.0;
        for (double v : map) mass += v;
        if (std::abs(mass - gtp.total) > 1e-9 * std::max(1.0, gtp.total)) {
            char note[128];
            std::snprintf(note, sizeof note, "%s: mass %.6g rescaled to reference %.6g",
                          name.c_str(), mass, gtp.total);
            notes.push_back(note);
        }
        map = rescale_to(std::move(map), gtp.total);
    }

    const bool include_flat = estimates.size() > 1;
    auto report = compare_report(reference, estimates, grid, cfg.kwd_l, include_flat);
    report.log.insert(report.log.begin(), notes.begin(), notes.end());

    std::fputs(report.table().c_str(), stdout);
    for (const auto& line : report.log) std::printf("note: %s\n", line.c_str());

    json out;
    out["lattice_l"] = report.lattice_l;
    out["reference_mass"] = report.reference_mass;
    for (const auto& row : report.rows) out["rows"].push_back({{"name", row.name}, {"kwd", row.kwd}});
    out["log"] = report.log;
    write_text_file(cfg.out / "kwd_report.json", out.dump(2) + "\n");
    write_text_file(cfg.out / "kwd_report.txt", report.table());

    write_pgm(cfg.out / "heatmap_gtp.pgm", grid, reference);
    for (const auto& [name, map] : estimates)
        if (name != "gtp") write_pgm(cfg.out / ("heatmap_" + name + ".pgm"), grid, map);
    return 0;
}

// ---------------------------------------------------------------------------
// toy

std::string bracketed(std::span<const double> v, int decimals) {
    std::string out = "[";
    char buf[40];
    for (std::size_t j = 0; j < v.size(); ++j) {
        if (decimals < 0) {
            out += format_double(v[j]);
        } else {
            std::snprintf(buf, sizeof buf, "%.*f", decimals, v[j]);
            out += buf;
        }
        if (j + 1 < v.size()) out += ", ";
    }
    return out + "]";
}

int cmd_toy() {
    // Two cells over three tiles: cell a covers tiles 0-1 evenly, cell b
    // covers tile 1 three times as strongly as tile 2.
    FootprintSet toy;
    toy.grid = Grid(3, 1);
    toy.cells = {{"a", {{0, 1.0}, {1, 1.0}}}, {"b", {{1, 3.0}, {2, 1.0}}}};
    auto P = build_assignment_matrix(toy);
    CountVector c(std::vector<double>{40.0, 70.0});
    PriorVector flat = PriorVector::flat(3);

    std::printf("tiles J = 3, cells I = 2\n");
    std::printf("P (rows = cells, columns = tiles):\n");
    for (int i = 0; i < P.rows(); ++i) {
        std::vector<double> dense(P.cols(), 0.0);
        for (const auto& e : P.row(i)) dense[e.index] = e.value;
        std::printf("  %s  %s\n", P.cell_ids()[i].c_str(), bracketed(dense, -1).c_str());
    }
    std::printf("c = %s, C = %s\n", bracketed(c.values(), -1).c_str(),
                format_double(c.total()).c_str());

    auto sb = sb_estimate(P, c, flat);
    std::printf("SB   %s\n", bracketed(sb.values, -1).c_str());

    // Converged far past the default so the iterate sits inside the ML
    // solution set at the membership tolerance below.
    auto em = em_estimate(P, c, flat, EmConfig{100000, 1e-300, 1e-13});
    std::printf("EM   %s  (%d iterations, ml residual %.2e)\n",
                bracketed(em.values, 5).c_str(), em.iterations, em.ml_residual);

    auto df = df_estimate(df_precompute(P, flat), c);
    std::printf("DF   %s\n", bracketed(df.values, 5).c_str());

    const bool sb_member = mlbs_membership(P, c, sb.values);
    const bool em_member = mlbs_membership(P, c, em.values);
    const bool df_member = mlbs_membership(P, c, df.values);
    std::printf("ML solution set membership: SB %s, EM %s, DF %s\n",
                sb_member ? "yes" : "no", em_member ? "yes" : "no", df_member ? "yes" : "no");

    const double ll_sb = loglikelihood(P, c, sb.values);
    const double ll_em = loglikelihood(P, c, em.values);
    const double ll_df = loglikelihood(P, c, df.values);
    std::printf("log-likelihood: EM %.9f, DF %.9f (equal within %.1e)\n", ll_em, ll_df,
                std::abs(ll_df - ll_em));
    std::printf("log-likelihood: SB %.9f (below the maximum by %.6f)\n", ll_sb, ll_em - ll_sb);

    const bool agree = std::abs(ll_df - ll_em) <= 1e-9 * std::max(1.0, std::abs(ll_em));
    return (em_member && df_member && !sb_member && agree) ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Density estimation over a tile grid from per-cell device counts"};
    app.require_subcommand(0, 1);

    // The config file must be applied before CLI11 parses argv (command
    // line wins over config), so scan for --config/--out/subcommand first.
    // estimate/evaluate default to the dump's own config echo, keeping a
    // dump generated under a custom config self-describing.
    std::string command;
    std::string config_path;
    fs::path outdir = "out";
    for (int k = 1; k < argc; ++k) {
        const std::string arg = argv[k];
        if (arg == "--out" && k + 1 < argc)
            outdir = argv[k + 1];
        else if (arg.rfind("--out=", 0) == 0)
            outdir = arg.substr(6);
        else if (arg == "--config" && k + 1 < argc)
            config_path = argv[k + 1];
        else if (arg.rfind("--config=", 0) == 0)
            config_path = arg.substr(9);
        else if (command.empty() && !arg.empty() && arg[0] != '-')
            command = arg;
    }
    if (config_path.empty() && (command == "estimate" || command == "evaluate")) {
        const fs::path echo = outdir / "scenario.ini";
        if (fs::exists(echo)) config_path = echo.string();
    }

    RunConfig cfg;
    std::optional<std::uint64_t> seed_override;
    bool print_defaults = false;
    if (!config_path.empty()) {
        try {
            apply_config_file(config_path, cfg);
        } catch (const ConfigError& e) {
            std::fprintf(stderr, "config error: %s\n", e.what());
            return 2;
        } catch (const IoError& e) {
            std::fprintf(stderr, "io error: %s\n", e.what());
            return 4;
        }
    }
    bind_options(app, cfg, seed_override, print_defaults, config_path);

    auto* c_generate = app.add_subcommand("generate", "Write a seeded scenario dump");
    auto* c_estimate = app.add_subcommand("estimate", "Run estimators on a scenario dump");
    auto* c_evaluate = app.add_subcommand("evaluate", "Score density maps against the dump's GTP");
    auto* c_toy = app.add_subcommand("toy", "Print the 3-tile/2-cell walkthrough");
    auto* c_bench = app.add_subcommand("bench", "generate + estimate + evaluate in one run");
    for (auto* sub : {c_generate, c_estimate, c_evaluate, c_toy, c_bench})
        sub->fallthrough();  // all options live on the root app

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 2;
    }

    if (seed_override) cfg.scenario.seed = *seed_override;

    if (print_defaults) {
        std::fputs(config_echo(cfg).c_str(), stdout);
        return 0;
    }

    try {
        cfg.validate();
        if (c_toy->parsed()) return cmd_toy();
        if (c_generate->parsed()) return cmd_generate(cfg, config_echo(cfg));
        if (c_estimate->parsed()) return cmd_estimate(cfg);
        if (c_evaluate->parsed()) return cmd_evaluate(cfg);
        if (c_bench->parsed()) {
            if (int rc = cmd_generate(cfg, config_echo(cfg)); rc != 0) return rc;
            if (int rc = cmd_estimate(cfg); rc != 0) return rc;
            return cmd_evaluate(cfg);
        }
        std::fputs(app.help().c_str(), stdout);
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 4;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
