// mihash command-line front end. Every subcommand reads/writes the binary
// formats documented in io.hpp or plain CSV. Failures print a single line
//   error code=<code> message="<text>"
// on stderr and exit nonzero.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "mihash/mihash.hpp"

using namespace mihash;
namespace fs = std::filesystem;

namespace {

std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += (c == '\n' || c == '\r') ? ' ' : c;
    }
    return out + "\"";
}

int report(const std::string& code, const std::string& message, int status) {
    std::cerr << "error code=" << code << " message=" << quoted(message) << "\n";
    return status;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) detail::fail("io_error", "cannot create directory '" + dir + "': " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::vector<LabelSet> load_label_sets(const std::string& path, io::LabelVocabulary& vocab, std::size_t rows) {
    return io::load_labels(path, vocab, rows).labels;
}

std::string hex_key(std::uint64_t key) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(key));
    return buf;
}

std::string utilization_csv(const std::vector<CodeCount>& hist) {
    std::string out = "rank,code_key,count\n";
    for (std::size_t i = 0; i < hist.size(); ++i)
        out += std::to_string(i + 1) + "," + hex_key(hist[i].key) + "," + std::to_string(hist[i].count) + "\n";
    return out;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
    std::string features;
    std::string config;
    std::string out_dir = "run";
    std::vector<std::string> overrides;
};

void run_train(const TrainArgs& a) {
    const TrainConfig config = io::load_config(a.config, a.overrides);
    const Matrix features = io::load_features_any(a.features);
    ensure_dir(a.out_dir);
    io::write_text(join(a.out_dir, "config.txt"), io::dump_config(config));

    SeededRng rng(config.seed);
    const HashModel init = init_model(features.cols(), config.code_len, rng);
    const auto on_epoch = [&](const EpochLog& e, const HashModel& model) {
        // checkpoint at the end of every epoch that precedes a decay boundary
        if ((e.epoch + 1) % config.lr_decay_every == 0)
            io::save_model(model, join(a.out_dir, "checkpoint_epoch" + std::to_string(e.epoch + 1) + ".bin"));
    };
    const TrainResult result = train(init, features, config, on_epoch);
    io::save_model(result.model, join(a.out_dir, "model.bin"));
    io::save_codes(pack(forward(result.model, features).codes), join(a.out_dir, "codes.bin"));
    io::write_text(join(a.out_dir, "log.csv"), io::log_csv(result.log));
    std::cout << "trained epochs=" << result.log.size() << " samples=" << features.rows()
              << " bits=" << config.code_len << " out=" << a.out_dir << "\n";
}

// --- encode / index / query / eval -----------------------------------------

void run_encode(const std::string& model_path, const std::string& features_path, const std::string& out) {
    const HashModel model = io::load_model(model_path);
    const PackedCodes codes = pack(forward(model, io::load_features_any(features_path)).codes);
    io::save_codes(codes, out);
    std::cout << "encoded rows=" << codes.rows() << " bits=" << codes.bits() << "\n";
}

void run_index(const std::string& codes_path, const std::string& labels_path, const std::string& out) {
    PackedCodes codes = io::load_codes(codes_path);
    std::optional<std::vector<LabelSet>> labels;
    io::LabelVocabulary vocab;
    if (!labels_path.empty()) labels = load_label_sets(labels_path, vocab, codes.rows());
    const HammingIndex index = HammingIndex::with_row_ids(std::move(codes), std::move(labels));
    const auto hist = utilization_histogram(index.database());
    io::write_text(out, utilization_csv(hist));
    std::cout << "index rows=" << index.size() << " bits=" << index.database().bits() << " distinct=" << hist.size()
              << " max_count=" << (hist.empty() ? 0 : hist.front().count) << "\n";
}

void run_query(const std::string& db_path, const std::string& queries_path, std::size_t k, const std::string& out) {
    const HammingIndex index = HammingIndex::with_row_ids(io::load_codes(db_path));
    const PackedCodes queries = io::load_codes(queries_path);
    detail::require(queries.bits() == index.database().bits(), "dimension_mismatch",
                    "query and database code lengths differ");
    std::string csv = "query,rank,id,distance\n";
    bool truncated = false;
    for (std::size_t q = 0; q < queries.rows(); ++q) {
        const TopK top = query_topk(index, queries.row(q), k);
        truncated = truncated || top.truncated;
        for (std::size_t r = 0; r < top.ids.size(); ++r)
            csv += std::to_string(q) + "," + std::to_string(r + 1) + "," + std::to_string(top.ids[r]) + "," +
                   std::to_string(top.distances[r]) + "\n";
    }
    io::write_text(out, csv);
    std::cout << "queried queries=" << queries.rows() << " k=" << k << (truncated ? " truncated=1" : "") << "\n";
}

struct EvalArgs {
    std::string db, db_labels, queries, query_labels;
    std::size_t k = 100;
    std::size_t pr_stride = 1;
    std::string out_dir = "eval";
};

void run_eval(const EvalArgs& a) {
    io::LabelVocabulary vocab;  // shared so tokens mean the same thing on both sides
    PackedCodes db = io::load_codes(a.db);
    auto db_labels = load_label_sets(a.db_labels, vocab, db.rows());
    const PackedCodes queries = io::load_codes(a.queries);
    const auto q_labels = load_label_sets(a.query_labels, vocab, queries.rows());
    const HammingIndex index = HammingIndex::with_row_ids(std::move(db), std::move(db_labels));
    const EvalReport report = evaluate(index, queries, q_labels, a.k, a.pr_stride);

    ensure_dir(a.out_dir);
    io::write_text(join(a.out_dir, "map.csv"), "k,map\n" + std::to_string(a.k) + "," + io::format_double(report.map_at_k) + "\n");
    std::string pr = "rank,recall,precision\n";
    for (const auto& p : report.pr_points)
        pr += std::to_string(p.rank) + "," + io::format_double(p.recall) + "," + io::format_double(p.precision) + "\n";
    io::write_text(join(a.out_dir, "pr.csv"), pr);
    io::write_text(join(a.out_dir, "utilization.csv"), utilization_csv(report.utilization));
    std::cout << "map@" << a.k << "=" << io::format_double(report.map_at_k) << "\n";
}

// --- stats ------------------------------------------------------------------

void run_stats(const std::string& codes_path, const std::string& out) {
    const CodeMatrix codes = unpack(io::load_codes(codes_path));
    const PairStats stats = estimate_stats(codes);
    const MiReport rep = mi_report(stats);
    std::string csv = "pair,i,j,p_both,p_only_i,p_only_j,p_neither,mi\n";
    for (std::size_t i = 0; i < stats.bits(); ++i)
        for (std::size_t j = i + 1; j < stats.bits(); ++j) {
            const JointTable t = stats.joint(i, j);
            csv += std::to_string(stats.pair_index(i, j)) + "," + std::to_string(i) + "," + std::to_string(j);
            for (double p : t) csv += "," + io::format_double(p);
            csv += "," + io::format_double(rep.per_pair(i, j)) + "\n";
        }
    io::write_text(out, csv);
    std::cout << "L_m=" << io::format_double(rep.total) << " pairs=" << stats.bits() * (stats.bits() - 1) / 2 << "\n";
}

// --- simulate-convergence --------------------------------------------------

struct SlackArgs {
    double joint = 0.4, marginal_i = 0.5, marginal_j = 0.5;
    std::string schedule = "harmonic";
    double eta0 = 1e-2;
    double param = 1.0;  // exponent for power, ratio for geometric
    std::size_t steps = 10000;
    double drift = 0.0;  // marginals relax toward 1/2 at rate eta * drift
    std::string out = "slack.csv";
};

void run_simulate(const SlackArgs& a) {
    Schedule sched;
    if (a.schedule == "harmonic") sched = harmonic_schedule(a.eta0);
    else if (a.schedule == "power") sched = power_schedule(a.eta0, a.param);
    else if (a.schedule == "geometric") sched = geometric_schedule(a.eta0, a.param);
    else if (a.schedule == "constant") sched = constant_schedule(a.eta0);
    else detail::fail("invalid_argument", "unknown schedule '" + a.schedule + "'");

    DriftPolicy drift;
    if (a.drift != 0.0) {
        const double rate = a.drift;
        drift = [rate](std::size_t, const SlackState& s, double eta) {
            return MarginalDrift{eta * rate * (s.marginal_i - 0.5), eta * rate * (s.marginal_j - 0.5)};
        };
    }
    const SlackTrace t = simulate_slack({a.joint, a.marginal_i, a.marginal_j}, sched, a.steps, drift);
    std::string csv = "step,lr,epsilon,joint_grad,delta_i,delta_j,clamped\n0,," + io::format_double(t.epsilon[0]) + ",,,,0\n";
    std::size_t next_clamp = 0;
    for (std::size_t s = 0; s < t.steps; ++s) {
        const bool clamped = next_clamp < t.clamp_steps.size() && t.clamp_steps[next_clamp] == s;
        if (clamped) ++next_clamp;
        csv += std::to_string(s + 1) + "," + io::format_double(t.lr[s]) + "," + io::format_double(t.epsilon[s + 1]) +
               "," + io::format_double(t.joint_grad[s]) + "," + io::format_double(t.delta_i[s]) + "," +
               io::format_double(t.delta_j[s]) + "," + (clamped ? "1" : "0") + "\n";
    }
    io::write_text(a.out, csv);
    std::cout << "epsilon_0=" << io::format_double(t.epsilon.front()) << " epsilon_T=" << io::format_double(t.epsilon.back())
              << " clamps=" << t.clamp_steps.size() << "\n";
}

// --- scatter ----------------------------------------------------------------

struct ScatterArgs {
    std::string features;
    std::string model;
    std::uint64_t seed = 0;
    std::size_t code_len = 16;
    double margin = 0.01;  // <= 0 keeps the model uncollapsed
    ScatterConfig config;
    std::string out_dir = "scatter";
};

void run_scatter(const ScatterArgs& a) {
    const Matrix features = io::load_features_any(a.features);
    HashModel model;
    if (!a.model.empty()) {
        model = io::load_model(a.model);
    } else {
        SeededRng rng(a.seed);
        model = init_model(features.cols(), a.code_len, rng);
    }
    if (a.margin > 0.0) model = collapse_model(std::move(model), features, a.margin);
    const auto frames = scatter_experiment(std::move(model), features, a.config);

    ensure_dir(a.out_dir);
    std::string summary = "step,distinct_points,mi\n";
    for (const auto& f : frames) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%03zu.csv", f.step);
        std::string csv = "sample,x,y\n";
        for (std::size_t n = 0; n < f.points.size(); ++n)
            csv += std::to_string(n) + "," + std::to_string(f.points[n].x) + "," + std::to_string(f.points[n].y) + "\n";
        io::write_text(join(a.out_dir, name), csv);
        summary += std::to_string(f.step) + "," + std::to_string(f.distinct_points()) + "," + io::format_double(f.mi) + "\n";
    }
    io::write_text(join(a.out_dir, "summary.csv"), summary);
    std::cout << "frames=" << frames.size() << " distinct_first=" << frames.front().distinct_points()
              << " distinct_last=" << frames.back().distinct_points() << "\n";
}

// --- gen-synthetic ---------------------------------------------------------

void run_gen(const SyntheticSpec& spec, const std::string& out, const std::string& labels_out) {
    const LabeledFeatures data = gaussian_clusters(spec);
    io::save_features(data.features, out);
    io::write_text(labels_out, io::format_labels(data.labels));
    std::cout << "generated samples=" << spec.samples << " dim=" << spec.dim << " clusters=" << spec.clusters << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mihash: binary hashing with pairwise mutual-information minimization"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a hash layer; writes model.bin, codes.bin, log.csv, checkpoints");
    train_cmd->add_option("--features", train_args.features, "feature file (.bin or .csv)")->required();
    train_cmd->add_option("--config", train_args.config, "key = value config file");
    train_cmd->add_option("--out-dir", train_args.out_dir, "output directory");
    train_cmd->add_option("overrides", train_args.overrides, "key=value overrides, applied after the config file");

    std::string enc_model, enc_features, enc_out = "codes.bin";
    auto* encode_cmd = app.add_subcommand("encode", "binarize features with a trained model");
    encode_cmd->add_option("--model", enc_model)->required();
    encode_cmd->add_option("--features", enc_features)->required();
    encode_cmd->add_option("--out", enc_out);

    std::string idx_codes, idx_labels, idx_out = "utilization.csv";
    auto* index_cmd = app.add_subcommand("index", "build a Hamming index and report code utilization");
    index_cmd->add_option("--codes", idx_codes)->required();
    index_cmd->add_option("--labels", idx_labels);
    index_cmd->add_option("--out", idx_out);

    std::string q_db, q_queries, q_out = "results.csv";
    std::size_t q_k = 10;
    auto* query_cmd = app.add_subcommand("query", "top-k Hamming search");
    query_cmd->add_option("--db", q_db)->required();
    query_cmd->add_option("--queries", q_queries)->required();
    query_cmd->add_option("--k", q_k)->check(CLI::PositiveNumber);
    query_cmd->add_option("--out", q_out);

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "MAP@k, precision-recall and utilization CSVs");
    eval_cmd->add_option("--db", eval_args.db)->required();
    eval_cmd->add_option("--db-labels", eval_args.db_labels)->required();
    eval_cmd->add_option("--queries", eval_args.queries)->required();
    eval_cmd->add_option("--query-labels", eval_args.query_labels)->required();
    eval_cmd->add_option("--k", eval_args.k)->check(CLI::PositiveNumber);
    eval_cmd->add_option("--pr-stride", eval_args.pr_stride)->check(CLI::PositiveNumber);
    eval_cmd->add_option("--out-dir", eval_args.out_dir);

    std::string st_codes, st_out = "stats.csv";
    auto* stats_cmd = app.add_subcommand("stats", "pairwise joint tables and mutual information");
    stats_cmd->add_option("--codes", st_codes)->required();
    stats_cmd->add_option("--out", st_out);

    SlackArgs slack;
    auto* sim_cmd = app.add_subcommand("simulate-convergence", "slack recursion for one bit pair");
    sim_cmd->add_option("--joint", slack.joint);
    sim_cmd->add_option("--p-i", slack.marginal_i);
    sim_cmd->add_option("--p-j", slack.marginal_j);
    sim_cmd->add_option("--schedule", slack.schedule, "harmonic | power | geometric | constant");
    sim_cmd->add_option("--eta0", slack.eta0);
    sim_cmd->add_option("--param", slack.param, "power exponent or geometric ratio");
    sim_cmd->add_option("--steps", slack.steps);
    sim_cmd->add_option("--drift", slack.drift, "marginal relaxation rate toward 1/2");
    sim_cmd->add_option("--out", slack.out);

    ScatterArgs sc;
    auto* scatter_cmd = app.add_subcommand("scatter", "MI-only optimization from a collapsed start, one CSV per frame");
    scatter_cmd->add_option("--features", sc.features)->required();
    scatter_cmd->add_option("--model", sc.model, "start from this model instead of a fresh one");
    scatter_cmd->add_option("--seed", sc.seed);
    scatter_cmd->add_option("--code-len", sc.code_len);
    scatter_cmd->add_option("--margin", sc.margin, "collapse margin; 0 disables collapsing");
    scatter_cmd->add_option("--lr", sc.config.lr);
    scatter_cmd->add_option("--beta", sc.config.beta);
    scatter_cmd->add_option("--steps", sc.config.steps);
    scatter_cmd->add_option("--out-dir", sc.out_dir);

    SyntheticSpec spec;
    std::string gen_out = "features.bin", gen_labels = "labels.txt";
    auto* gen_cmd = app.add_subcommand("gen-synthetic", "labeled Gaussian clusters as a feature file");
    gen_cmd->add_option("--samples", spec.samples);
    gen_cmd->add_option("--dim", spec.dim);
    gen_cmd->add_option("--clusters", spec.clusters);
    gen_cmd->add_option("--center-scale", spec.center_scale);
    gen_cmd->add_option("--noise", spec.noise);
    gen_cmd->add_option("--seed", spec.seed);
    gen_cmd->add_option("--out", gen_out);
    gen_cmd->add_option("--labels", gen_labels);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report("usage", e.what(), 2);
    }

    try {
        if (*train_cmd) run_train(train_args);
        else if (*encode_cmd) run_encode(enc_model, enc_features, enc_out);
        else if (*index_cmd) run_index(idx_codes, idx_labels, idx_out);
        else if (*query_cmd) run_query(q_db, q_queries, q_k, q_out);
        else if (*eval_cmd) run_eval(eval_args);
        else if (*stats_cmd) run_stats(st_codes, st_out);
        else if (*sim_cmd) run_simulate(slack);
        else if (*scatter_cmd) run_scatter(sc);
        else if (*gen_cmd) run_gen(spec, gen_out, gen_labels);
    } catch (const Error& e) {
        return report(e.code(), e.what(), 1);
    } catch (const std::exception& e) {
        return report("internal", e.what(), 1);
    }
    return 0;
}
