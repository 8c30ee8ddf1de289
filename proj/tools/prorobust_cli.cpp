// prorobust: dataset generation, training and evaluation of prescribed
// box uncertainty sets for the robust DC-OPF.

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "prorobust/evaluator.hpp"
#include "prorobust/grid_io.hpp"
#include "prorobust/scenario.hpp"
#include "prorobust/serialize.hpp"
#include "prorobust/trainer.hpp"

namespace fs = std::filesystem;
using namespace prorobust;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitSolver = 4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
    return s.str();
}

std::string absolute(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

// Where a command writes: an explicit --run-dir, or a fresh
// <root>/<timestamp>-<hash> directory.
struct Output {
    std::string root = "runs";
    std::string run_dir;

    fs::path resolve(const std::vector<std::string>& argv) const {
        if (!run_dir.empty()) return run_dir;
        std::string joined;
        for (const auto& a : argv) joined += a + '\0';
        return fs::path(root) / (timestamp() + "-" + fnv1a_hex(joined).substr(0, 8));
    }

    void add(CLI::App* app) {
        app->add_option("--out", root, "Root directory for run folders")->capture_default_str();
        app->add_option("--run-dir", run_dir, "Write into exactly this directory");
    }
};

json base_manifest(const std::string& command, const std::vector<std::string>& argv) {
    return {{"schema_version", kSchemaVersion}, {"command", command}, {"argv", argv}, {"created", timestamp()}};
}

std::string case_hash(const GridCase& c) { return fnv1a_hex(case_to_json(c).dump()); }

Vec parse_c_viol(const std::string& spec, std::size_t K, SolverConfig& solver) {
    if (spec.rfind("index:", 0) == 0) {
        const double step = std::stod(spec.substr(6));
        Vec c(static_cast<Eigen::Index>(K));
        for (std::size_t k = 0; k < K; ++k) c[static_cast<Eigen::Index>(k)] = step * static_cast<double>(k + 1);
        solver.violation_costs = c;
        return c;
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(spec, &used);
    } catch (const std::exception&) {
        throw UsageError("--c-viol: expected a number or index:<step>, got '" + spec + "'");
    }
    if (used != spec.size() || v < 0.0) throw UsageError("--c-viol: expected a nonnegative number, got '" + spec + "'");
    solver.violation_cost = v;
    solver.violation_costs.resize(0);
    return Vec::Constant(static_cast<Eigen::Index>(K), v);
}

struct DataArgs {
    std::string data_dir;

    Dataset load(std::string* hash) const {
        const fs::path dir(data_dir);
        const json manifest = read_json(dir / "manifest.json");
        if (hash) *hash = fnv1a_hex(detail::read_file(dir / "dataset.csv"));
        return dataset_from_files(dir / "dataset.csv", manifest);
    }
};

void check_case_matches(const GridCase& c, const Dataset& ds) {
    if (ds.nominal_demand.size() != static_cast<Eigen::Index>(c.num_buses()) ||
        ds.nominal_wind.size() != static_cast<Eigen::Index>(c.num_wind()))
        throw DimensionError("dataset dimensions do not match the case");
}

// ---------------------------------------------------------------- generate-data

struct GenerateArgs {
    std::string case_path;
    std::size_t n = 2000;
    std::string split = "1500:500";
    double rel_std = 0.15, phi = 0.5, lo = 0.5, hi = 1.1;
    std::uint64_t seed = 1;
    Output out;

    std::vector<std::string> argv() const {
        return {"generate-data", "--case", case_path, "--n", std::to_string(n), "--split", split,
                "--rel-std", format_double(rel_std), "--phi", format_double(phi), "--lo", format_double(lo),
                "--hi", format_double(hi), "--seed", std::to_string(seed)};
    }
};

int cmd_generate(GenerateArgs a) {
    a.case_path = absolute(a.case_path);
    if (a.n == 0) throw UsageError("--n must be positive");
    const auto colon = a.split.find(':');
    if (colon == std::string::npos) throw UsageError("--split must look like TRAIN:TEST");
    std::size_t n_train = 0, n_test = 0;
    try {
        n_train = std::stoul(a.split.substr(0, colon));
        n_test = std::stoul(a.split.substr(colon + 1));
    } catch (const std::exception&) {
        throw UsageError("--split must look like TRAIN:TEST");
    }
    if (n_train + n_test != a.n) throw UsageError("--split must add up to --n");
    if (n_train == 0) throw UsageError("--split needs a nonempty training part");

    const GridCase c = load_case(a.case_path);
    DatasetConfig cfg;
    cfg.n = a.n;
    cfg.n_train = n_train;
    cfg.lo = a.lo;
    cfg.hi = a.hi;
    cfg.rel_std = a.rel_std;
    cfg.phi = a.phi;
    cfg.seed = a.seed;
    const Dataset ds = generate_dataset(c, cfg);

    const auto argv = a.argv();
    const fs::path dir = a.out.resolve(argv);
    const std::string csv = dataset_csv(ds);
    write_text(dir / "dataset.csv", csv);
    json manifest = dataset_manifest(ds, fnv1a_hex(csv), case_hash(c));
    const json run = base_manifest("generate-data", argv);
    manifest.update(run);
    write_text(dir / "manifest.json", dump(manifest));
    std::cout << dir.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string case_path;
    DataArgs data;
    std::string mode = "coe", sampling = "p_all";
    int epochs = 100, batch = 20;
    double lr = -1.0, lr_tau = -1.0;
    double gamma = 0.01, kappa = 0.1, lambda_init = 100.0, tau_init = 0.0;
    std::uint64_t seed = 1;
    std::size_t n_cond = 200, bins = 10;
    std::string bin_key = "total";
    std::string c_viol = "20000";
    int workers = 1;
    double max_flagged = 0.2;
    int checkpoint_every = 0;
    double cost_base = -1.0;
    bool quiet = false;
    Output out;

    std::vector<std::string> argv() const {
        return {"train", "--case", case_path, "--data", data.data_dir, "--mode", mode, "--sampling", sampling,
                "--epochs", std::to_string(epochs), "--batch", std::to_string(batch), "--lr", format_double(lr),
                "--lr-tau", format_double(lr_tau), "--gamma", format_double(gamma), "--kappa", format_double(kappa),
                "--lambda-init", format_double(lambda_init), "--tau-init", format_double(tau_init), "--seed",
                std::to_string(seed), "--n-cond", std::to_string(n_cond), "--bins", std::to_string(bins),
                "--bin-key", bin_key, "--c-viol", c_viol, "--max-flagged", format_double(max_flagged),
                "--checkpoint-every", std::to_string(checkpoint_every), "--cost-base", format_double(cost_base)};
    }
};

int cmd_train(TrainArgs a) {
    a.case_path = absolute(a.case_path);
    a.data.data_dir = absolute(a.data.data_dir);
    if (a.epochs < 1) throw UsageError("--epochs must be at least 1");
    if (a.batch < 1) throw UsageError("--batch must be at least 1");

    TrainingConfig cfg;
    try {
        cfg = TrainingConfig::defaults(parse_train_mode(a.mode));
        cfg.sampling = parse_sampling_mode(a.sampling);
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    if (a.lr < 0.0) a.lr = cfg.rho;
    cfg.epochs = a.epochs;
    cfg.batch = a.batch;
    cfg.rho = a.lr;
    cfg.rho_tau = a.lr_tau;
    cfg.gamma = a.gamma;
    cfg.kappa = a.kappa;
    cfg.lambda_init = a.lambda_init;
    cfg.tau_init = a.tau_init;
    cfg.seed = a.seed;
    cfg.n_cond_samples = a.n_cond;
    cfg.n_bins = a.bins;
    cfg.workers = a.workers;
    cfg.max_flagged_fraction = a.max_flagged;
    if (a.bin_key == "total") {
        cfg.bin_key = BinKey::total_forecast;
    } else if (a.bin_key.rfind("farm:", 0) == 0) {
        cfg.bin_key = BinKey::farm;
        cfg.bin_farm = std::stol(a.bin_key.substr(5)) - 1;
    } else {
        throw UsageError("--bin-key must be 'total' or 'farm:<j>'");
    }
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }

    const GridCase c = load_case(a.case_path);
    const FlowMaps maps = build_flow_maps(c);
    std::string ds_hash;
    const Dataset ds = a.data.load(&ds_hash);
    check_case_matches(c, ds);
    SolverConfig solver;
    parse_c_viol(a.c_viol, c.num_robust_rows(), solver);
    // Prices enter per MW (x base_mva) for cost-based training; the
    // constraint-based multiplier defaults are sized for prices per p.u.
    if (a.cost_base < 0.0) a.cost_base = cfg.mode == TrainMode::poe ? 1.0 : c.base_mva;
    if (a.cost_base == 0.0) throw UsageError("--cost-base must be positive");
    solver.cost_base = a.cost_base;

    const auto argv = a.argv();
    const fs::path dir = a.out.resolve(argv);
    fs::create_directories(dir);
    std::ofstream trace(dir / "trace.jsonl", std::ios::binary);
    if (!trace) throw Error("cannot write " + (dir / "trace.jsonl").string());

    Trainer trainer(c, maps, ds, cfg, solver);
    const auto init = init_weights(ds);
    auto weights_text = [&](const TrainingResult& now) {
        json j = weights_to_json(now.weights, ds_hash, now.tau, now.lambda);
        j["cost_base"] = a.cost_base;
        return dump(j);
    };
    auto on_epoch = [&](const EpochRecord& r, const TrainingResult& now) {
        if (a.checkpoint_every > 0 && r.epoch % a.checkpoint_every == 0)
            write_text(dir / ("checkpoint_" + std::to_string(r.epoch) + ".json"), weights_text(now));
        trace << epoch_to_json(r).dump() << "\n";
        trace.flush();
        if (!a.quiet)
            std::cerr << "epoch " << r.epoch << " loss " << r.loss << " first-stage " << r.first_stage
                      << (cfg.mode == TrainMode::poe ? " H " + std::to_string(r.H) : "") << "\n";
    };
    const TrainingResult res = trainer.run(init, on_epoch);

    const std::string final_weights = weights_text(res);
    write_text(dir / "weights.json", final_weights);
    json manifest = base_manifest("train", argv);
    manifest["dataset_hash"] = ds_hash;
    manifest["case_hash"] = case_hash(c);
    manifest["weights_hash"] = fnv1a_hex(final_weights);
    manifest["outputs"] = {"weights.json", "trace.jsonl"};
    write_text(dir / "manifest.json", dump(manifest));
    std::cout << dir.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
    std::string case_path;
    DataArgs data;
    std::string policy = "perc:10:90";
    double gamma = 0.01;
    std::string c_viol = "20000";
    double cost_base = -1.0;
    int workers = 1;
    Output out;

    std::vector<std::string> argv() const {
        return {"evaluate", "--case", case_path, "--data", data.data_dir, "--policy", policy,
                "--gamma", format_double(gamma), "--c-viol", c_viol, "--cost-base", format_double(cost_base)};
    }
};

// Parses --policy; a weights file may carry the cost base it was trained
// with, which is reported through `cost_base`.
PolicySpec parse_policy(std::string& spec, const Dataset& ds, double* cost_base) {
    auto weights_at = [&](std::size_t pos) {
        std::string path = absolute(spec.substr(pos));
        spec = spec.substr(0, pos) + path;
        const json j = read_json(path);
        if (j.contains("cost_base") && j["cost_base"].is_number()) *cost_base = j["cost_base"].get<double>();
        return weights_from_json(j);
    };
    if (spec == "full") return build_baseline(PolicyKind::full_support, ds);
    if (spec.rfind("perc:", 0) == 0) {
        double lo = 0.0, hi = 0.0;
        const auto second = spec.find(':', 5);
        if (second == std::string::npos) throw UsageError("--policy perc needs perc:<lo>:<hi>");
        try {
            lo = std::stod(spec.substr(5, second - 5));
            hi = std::stod(spec.substr(second + 1));
        } catch (const std::exception&) {
            throw UsageError("--policy perc needs numeric bounds");
        }
        if (!(lo >= 0.0 && hi <= 100.0 && lo < hi)) throw UsageError("--policy perc needs 0 <= lo < hi <= 100");
        auto p = build_baseline(PolicyKind::percentile, ds, lo, hi);
        p.label = spec;
        return p;
    }
    if (spec.rfind("single:", 0) == 0) {
        PrescriptionWeights w = weights_at(7);
        w.M_mu.setZero();
        w.M_sigma.setZero();
        return prescriptive_policy(w, "single");
    }
    if (spec.rfind("prescriptive:", 0) == 0) return prescriptive_policy(weights_at(13), "prescriptive");
    throw UsageError("unknown --policy '" + spec + "'");
}

int cmd_evaluate(EvaluateArgs a) {
    a.case_path = absolute(a.case_path);
    a.data.data_dir = absolute(a.data.data_dir);
    if (!(a.gamma > 0.0 && a.gamma < 1.0)) throw UsageError("--gamma must lie in (0, 1)");
    if (a.workers < 1) throw UsageError("--workers must be at least 1");

    const GridCase c = load_case(a.case_path);
    const FlowMaps maps = build_flow_maps(c);
    std::string ds_hash;
    const Dataset ds = a.data.load(&ds_hash);
    check_case_matches(c, ds);
    double trained_base = c.base_mva;
    const PolicySpec policy = parse_policy(a.policy, ds, &trained_base);
    SolverConfig solver;
    parse_c_viol(a.c_viol, c.num_robust_rows(), solver);
    if (a.cost_base < 0.0) a.cost_base = trained_base;
    if (a.cost_base == 0.0) throw UsageError("--cost-base must be positive");
    solver.cost_base = a.cost_base;

    const EvalReport rep = evaluate(c, maps, policy, ds.test, a.gamma, solver, a.workers);
    const auto argv = a.argv();
    const fs::path dir = a.out.resolve(argv);
    const std::string report_text = dump(report_to_json(rep));
    write_text(dir / "report.json", report_text);
    write_text(dir / "samples.csv", report_samples_csv(rep));
    json manifest = base_manifest("evaluate", argv);
    manifest["dataset_hash"] = ds_hash;
    manifest["case_hash"] = case_hash(c);
    manifest["report_hash"] = fnv1a_hex(report_text);
    manifest["outputs"] = {"report.json", "samples.csv"};
    write_text(dir / "manifest.json", dump(manifest));
    std::cout << dir.string() << "\n";
    std::cout << "mean total cost " << rep.mean_total << "  first-stage " << rep.mean_first_stage << "  exceedance "
              << rep.mean_exceedance << "\nprobability of exceedance " << rep.prob_exceedance << "  CVaR "
              << rep.cvar << "  failed " << rep.n_failed << "\ntotal cost quartiles " << rep.q1 << " " << rep.median
              << " " << rep.q3 << "\n";
    return kExitOk;
}

int run(std::vector<std::string> args);

// ---------------------------------------------------------------- rerun

int cmd_rerun(const std::string& manifest_path, const Output& out) {
    const json m = read_json(manifest_path);
    if (!m.contains("argv") || !m["argv"].is_array()) throw ParseError(manifest_path + ": no argv recorded");
    std::vector<std::string> args = m["argv"].get<std::vector<std::string>>();
    if (!out.run_dir.empty()) {
        args.push_back("--run-dir");
        args.push_back(out.run_dir);
    } else {
        args.push_back("--out");
        args.push_back(out.root);
    }
    if (args.front() == "train") args.push_back("--quiet");
    return run(args);
}

int run(std::vector<std::string> args) {
    CLI::App app{"Prescribed box uncertainty sets for robust DC-OPF"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate-data", "Sample contexts and forecast errors");
    g->add_option("--case", gen.case_path, "Case JSON file or RTS CSV directory")->required();
    g->add_option("--n", gen.n, "Number of samples")->capture_default_str();
    g->add_option("--split", gen.split, "TRAIN:TEST sizes")->capture_default_str();
    g->add_option("--rel-std", gen.rel_std, "Error std relative to the forecast")->capture_default_str();
    g->add_option("--phi", gen.phi, "Correlation between wind farms")->capture_default_str();
    g->add_option("--lo", gen.lo, "Lower context scale")->capture_default_str();
    g->add_option("--hi", gen.hi, "Upper context scale")->capture_default_str();
    g->add_option("--seed", gen.seed, "Base seed")->capture_default_str();
    gen.out.add(g);

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a prescription map");
    t->add_option("--case", tr.case_path)->required();
    t->add_option("--data", tr.data.data_dir, "Dataset directory from generate-data")->required();
    t->add_option("--mode", tr.mode, "coe | poe")->capture_default_str();
    t->add_option("--sampling", tr.sampling, "p_all | p_cond | p_bins | single")->capture_default_str();
    t->add_option("--epochs", tr.epochs)->capture_default_str();
    t->add_option("--batch", tr.batch)->capture_default_str();
    t->add_option("--lr", tr.lr, "Learning rate (default 1e-6 coe, 1e-5 poe)");
    t->add_option("--lr-tau", tr.lr_tau, "Learning rate for tau (default: --lr)");
    t->add_option("--gamma", tr.gamma)->capture_default_str();
    t->add_option("--kappa", tr.kappa)->capture_default_str();
    t->add_option("--lambda-init", tr.lambda_init)->capture_default_str();
    t->add_option("--tau-init", tr.tau_init)->capture_default_str();
    t->add_option("--seed", tr.seed)->capture_default_str();
    t->add_option("--n-cond", tr.n_cond, "Fresh samples per step for p_cond")->capture_default_str();
    t->add_option("--bins", tr.bins, "Bin count for p_bins")->capture_default_str();
    t->add_option("--bin-key", tr.bin_key, "total | farm:<j>")->capture_default_str();
    t->add_option("--c-viol", tr.c_viol, "Violation cost per p.u., or index:<step>")->capture_default_str();
    t->add_option("--workers", tr.workers)->capture_default_str();
    t->add_option("--max-flagged", tr.max_flagged, "Abort an epoch above this flagged share")->capture_default_str();
    t->add_option("--checkpoint-every", tr.checkpoint_every, "Write weights every N epochs (0: off)")->capture_default_str();
    t->add_option("--cost-base", tr.cost_base, "$ per p.u. for each $/MW of price (default: base_mva for coe, 1 for poe)");
    t->add_flag("--quiet", tr.quiet);
    tr.out.add(t);

    EvaluateArgs ev;
    auto* e = app.add_subcommand("evaluate", "Out-of-sample evaluation on the test split");
    e->add_option("--case", ev.case_path)->required();
    e->add_option("--data", ev.data.data_dir)->required();
    e->add_option("--policy", ev.policy, "full | perc:LO:HI | single:W.json | prescriptive:W.json")
        ->capture_default_str();
    e->add_option("--gamma", ev.gamma)->capture_default_str();
    e->add_option("--c-viol", ev.c_viol)->capture_default_str();
    e->add_option("--cost-base", ev.cost_base, "$ per p.u. for each $/MW of price (default: from the weights, else base_mva)");
    e->add_option("--workers", ev.workers)->capture_default_str();
    ev.out.add(e);

    std::string manifest;
    Output rerun_out;
    auto* r = app.add_subcommand("rerun", "Repeat a run from its manifest");
    r->add_option("--manifest", manifest)->required();
    rerun_out.add(r);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*g) return cmd_generate(gen);
        if (*t) return cmd_train(tr);
        if (*e) return cmd_evaluate(ev);
        if (*r) return cmd_rerun(manifest, rerun_out);
    } catch (const UsageError& err) {
        std::cerr << "usage error: " << err.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& err) {
        std::cerr << "usage error: " << err.what() << "\n";
        return kExitUsage;
    } catch (const InvalidArgument& err) {
        std::cerr << "usage error: " << err.what() << "\n";
        return kExitUsage;
    } catch (const SolverFailure& err) {
        std::cerr << "solver error: " << err.what() << "\n";
        return kExitSolver;
    } catch (const prorobust::Error& err) {
        std::cerr << "data error: " << err.what() << "\n";
        return kExitData;
    } catch (const std::exception& err) {
        std::cerr << "data error: " << err.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}
