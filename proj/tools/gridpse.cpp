// gridpse: command-line front end for the estimation benchmarks.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "gridpse/bench/experiment.hpp"
#include "gridpse/error.hpp"

using namespace gridpse;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitSolver = 3;

struct Flags {
    std::string case_path, config, method, seeds, flows, unknown_branches, unknown_shunts, periods, bounds_cache, out;
    double noise_std = 0.001;
    int workers = 1;
    bool random_init = false;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

ExperimentConfig make_config(const CLI::App& app, const Flags& f) {
    ExperimentConfig c;
    if (!f.config.empty()) c = parse_config(read_file(f.config));
    auto given = [&](const char* name) { return app.count(name) > 0; };
    if (given("--case")) c.case_path = f.case_path;
    if (given("--method")) {
        c.methods.clear();
        std::istringstream is(f.method);
        for (std::string m; std::getline(is, m, ',');) c.methods.push_back(method_from_string(m));
    }
    if (given("--seeds")) c.seeds = parse_seeds(f.seeds);
    if (given("--noise-std")) c.noise_std = f.noise_std;
    if (given("--periods")) c.load_scales = parse_scales(f.periods);
    if (given("--flows")) c.flows = parse_flows(f.flows);
    if (given("--unknown-branches")) c.unknown_branches = parse_ids(f.unknown_branches);
    if (given("--unknown-shunts")) c.unknown_shunts = parse_ids(f.unknown_shunts);
    if (given("--bounds-cache")) c.bounds_cache = f.bounds_cache;
    if (given("--workers")) c.workers = f.workers;
    if (given("--random-init")) c.random_init = true;
    if (given("--out")) c.out_dir = f.out;
    return c;
}

int cmd_powerflow(const Experiment& ex) {
    nlohmann::ordered_json j;
    j["case"] = ex.config().case_path;
    j["load_scales"] = ex.config().load_scales;
    auto& periods = j["periods"] = nlohmann::ordered_json::array();
    const auto& net = ex.network();
    for (const auto& v : ex.truth()) {
        nlohmann::ordered_json p = nlohmann::ordered_json::array();
        for (std::size_t k = 0; k < v.size(); ++k)
            p.push_back({{"bus", net.buses()[k].id}, {"vm", v.magnitude(k)}, {"va_deg", v.angle(k) * 180.0 / M_PI}});
        periods.push_back(p);
    }
    if (ex.config().out_dir.empty()) {
        std::cout << j.dump(1) << "\n";
    } else {
        write_atomic(ex.config().out_dir + "/powerflow.json", j.dump(1) + "\n");
        std::printf("%zu periods, %zu buses -> %s/powerflow.json\n", ex.truth().size(), net.bus_count(),
                    ex.config().out_dir.c_str());
    }
    return 0;
}

int cmd_synth(const Experiment& ex) {
    for (auto seed : ex.config().seeds) {
        NativeCase c{ex.network(), ex.unknowns(), ex.measurements(seed)};
        const auto text = serialize_native_case(c);
        if (ex.config().out_dir.empty()) {
            std::cout << text;
            break;
        }
        write_atomic(ex.config().out_dir + "/measurements/seed-" + std::to_string(seed) + ".json", text);
    }
    if (!ex.config().out_dir.empty())
        std::printf("%zu measurement sets -> %s/measurements\n", ex.config().seeds.size(), ex.config().out_dir.c_str());
    return 0;
}

std::vector<MetricReport> reports_of(const std::vector<RunRecord>& records) {
    std::map<std::pair<std::string, int>, std::vector<RunRecord>> groups;
    for (const auto& r : records) groups[{r.instance, static_cast<int>(r.method)}].push_back(r);
    std::vector<MetricReport> out;
    for (auto& [key, recs] : groups) {
        try {
            out.push_back(aggregate(recs));
        } catch (const DataError& e) {
            std::fprintf(stderr, "skipping %s: %s\n", to_string(recs.front().method).c_str(), e.what());
        }
    }
    return out;
}

int cmd_estimate(const Experiment& ex) {
    const auto outcomes = ex.run_all();
    std::vector<RunRecord> all;
    bool any_ok = false;
    for (const auto& o : outcomes)
        for (const auto& r : o.records) {
            any_ok = any_ok || r.status == "optimal";
            all.push_back(r);
        }
    std::cout << report_table(reports_of(all));
    if (!any_ok) {
        std::fprintf(stderr, "solver failed on every seed\n");
        return kExitSolver;
    }
    return 0;
}

int cmd_sbt(const Experiment& ex) {
    if (ex.config().bounds_cache.empty()) throw DataError("sbt needs --bounds-cache");
    bool hit = false;
    const auto bounds = ex.shared_bounds(hit);
    std::printf("%s\n", hit ? "cache hit; bounds not recomputed" : "bounds tightened and cached");
    const auto truth = ex.true_parameters();
    const auto initial = ex.initial_bounds();
    std::printf("%-10s %12s %12s %12s %8s\n", "unknown", "lower", "upper", "database", "width");
    for (std::size_t k = 0; k < bounds.bounds.size(); ++k) {
        const auto& u = ex.unknowns()[k];
        const auto& b = bounds.bounds[k];
        const double w0 = initial.bounds[k].width();
        std::printf("%-10s %12.5f %12.5f %12.5f %8.3f\n", (to_string(u.target).substr(0, 6) + " " +
                    std::to_string(u.element)).c_str(), b.lo, b.hi, truth[k], w0 > 0 ? b.width() / w0 : 0.0);
    }
    return 0;
}

int cmd_report(const std::string& dir) {
    if (dir.empty()) throw DataError("report needs --out DIR holding a records/ directory");
    const std::filesystem::path rec_dir = std::filesystem::path(dir) / "records";
    if (!std::filesystem::is_directory(rec_dir)) throw DataError("no records in " + rec_dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(rec_dir))
        if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<RunRecord> records;
    for (const auto& f : files) records.push_back(record_from_json(read_file(f.string())));
    const auto reports = reports_of(records);
    if (reports.empty()) throw DataError("no aggregatable records in " + rec_dir.string());
    write_atomic(dir + "/report.json", report_to_json(reports));
    const auto table = report_table(reports);
    write_atomic(dir + "/report.txt", table);
    std::cout << table;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint parameter and state estimation benchmarks"};
    app.require_subcommand(1);
    Flags f;
    app.add_option("--case", f.case_path, "Case file (.m MATPOWER or native JSON)");
    app.add_option("--config", f.config, "JSON experiment config; flags override it");
    app.add_option("--method", f.method, "nlp | mc | sbt-mc, or a comma list");
    app.add_option("--seeds", f.seeds, "Count N, or list/ranges like 1,4,10-19");
    app.add_option("--noise-std", f.noise_std, "Measurement noise std (default 0.001)");
    app.add_option("--periods", f.periods, "Load scales, one period each (default 1.0)");
    app.add_option("--flows", f.flows, "Flow meters: branch or branch:bus, comma separated");
    app.add_option("--unknown-branches", f.unknown_branches, "Branch ids whose susceptance is unknown");
    app.add_option("--unknown-shunts", f.unknown_shunts, "Bus ids whose shunt susceptance is unknown");
    app.add_option("--bounds-cache", f.bounds_cache, "Tightened-bounds cache file");
    app.add_option("--workers", f.workers, "Concurrent seeds and SBT subproblems")->check(CLI::PositiveNumber);
    app.add_flag("--random-init", f.random_init, "Random nlp start instead of the ckt-SE warm start");
    app.add_option("--out", f.out, "Output directory");
    for (const char* name : {"powerflow", "synth", "estimate", "sbt", "report"}) app.add_subcommand(name)->fallthrough();
    app.get_subcommand("powerflow")->description("Solve the ground-truth power flow per period");
    app.get_subcommand("synth")->description("Write noisy measurement sets per seed");
    app.get_subcommand("estimate")->description("Run estimation methods over seeds and write run records");
    app.get_subcommand("sbt")->description("Tighten parameter bounds and store them in the cache");
    app.get_subcommand("report")->description("Aggregate run records in --out into metric tables");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        const auto* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        if (name == "report") return cmd_report(f.out);
        const Experiment ex(make_config(app, f));
        if (name == "powerflow") return cmd_powerflow(ex);
        if (name == "synth") return cmd_synth(ex);
        if (name == "estimate") return cmd_estimate(ex);
        return cmd_sbt(ex);
    } catch (const SolverError& e) {
        std::fprintf(stderr, "solver error: %s\n", e.what());
        return kExitSolver;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
}
