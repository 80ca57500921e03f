// Command-line front end: uncertainty profiles, kernel priors, training,
// reweighted SSL, early detection, data generation, and the verify suite.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "uqkit/uqkit.hpp"

namespace fs = std::filesystem;
using namespace uqkit;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "key = value config file");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "seed override")->each([&](const std::string&) {
        args.seed_set = true;
    });
}

KvConfig load_config(const CommonArgs& args) {
    KvConfig cfg;
    if (!args.config_path.empty()) {
        std::ifstream in(args.config_path);
        if (!in) throw std::runtime_error("cannot open config: " + args.config_path);
        cfg = KvConfig::parse(in);
    }
    if (args.seed_set) cfg.set("seed", std::to_string(args.seed));
    return cfg;
}

std::string out_or(const CommonArgs& args, const std::string& fallback) {
    return args.out_dir.empty() ? fallback : args.out_dir;
}

nlohmann::json profile_json(const UncertaintyProfile& p) {
    nlohmann::json j{{"vacuity", p.vacuity},
                     {"dissonance", p.dissonance},
                     {"entropy", p.entropy},
                     {"aleatoric", p.aleatoric},
                     {"epistemic", p.epistemic},
                     {"expected_pairwise_kl", p.expected_pairwise_kl}};
    if (p.mc_samples > 0) {
        j["mc_samples"] = p.mc_samples;
        j["aleatoric_mc"] = p.aleatoric_mc;
        j["aleatoric_mc_se"] = p.aleatoric_mc_se;
    }
    return j;
}

int cmd_uq_profile(const CommonArgs& args, const std::string& alpha_s, int mc,
                   bool dump_opinions) {
    KvConfig cfg = load_config(args);
    if (!alpha_s.empty()) cfg.set("alpha", alpha_s);
    if (mc >= 0) cfg.set("mc", std::to_string(mc));
    Vec alpha = parse_double_list(cfg.get_str("alpha", "1,1,1"));
    int samples = static_cast<int>(cfg.get_int("mc", 0));
    uint64_t seed = cfg.get_u64("seed", 1);
    DirichletParams d{alpha};
    nlohmann::json j;
    j["alpha"] = alpha;
    j["profile"] = profile_json(uncertainty_profile(d, samples, seed));
    if (dump_opinions) j["opinion"] = opinion_to_json(opinion_from_dirichlet(d));
    std::cout << j.dump(2) << "\n";
    if (!args.out_dir.empty()) return run_experiment("uq-profile", cfg, args.out_dir);
    return 0;
}

// Shared by `gkde` and `train`: either load a graph + mask from files named
// in the config or generate a stochastic block model from the same keys the
// experiment tasks use.
SbmData load_or_generate_graph(KvConfig& cfg) {
    std::string graph_file = cfg.get_str("graph_file", "");
    cfg.set("graph_file", graph_file);
    if (!graph_file.empty()) {
        SbmData data;
        data.g = read_graph(graph_file);
        std::string mask_file = cfg.get_str("mask_file", "");
        cfg.set("mask_file", mask_file);
        if (mask_file.empty()) throw std::runtime_error("graph_file requires mask_file");
        data.train_ids = read_node_ids(mask_file);
        data.node_is_ood.assign(data.g.num_nodes(), 0);
        std::string ood_file = cfg.get_str("ood_file", "");
        cfg.set("ood_file", ood_file);
        if (!ood_file.empty())
            for (int i : read_node_ids(ood_file)) data.node_is_ood.at(i) = 1;
        return data;
    }
    SbmConfig sc;
    sc.seed = cfg.get_u64("seed", 1);
    resolve_sbm_config(cfg, sc);
    return gen_sbm_graph(sc);
}

int cmd_gkde(const CommonArgs& args) {
    KvConfig cfg = load_config(args);
    cfg.set("task", "gkde");
    cfg.set("seed", std::to_string(cfg.get_u64("seed", 1)));
    std::string out = out_or(args, "out/gkde");
    fs::create_directories(out);
    SbmData data = load_or_generate_graph(cfg);
    double sigma = cfg.get_double("gkde_sigma", 1.0);
    cfg.set("gkde_sigma", fmt_g17(sigma));
    Mat alpha_hat = gkde_prior(data.g, data.train_ids, sigma);
    std::vector<char> in_train(data.g.num_nodes(), 0);
    for (int i : data.train_ids) in_train[i] = 1;

    CsvBuilder csv;
    csv.field(std::string("node"));
    csv.field(std::string("label"));
    csv.field(std::string("is_train"));
    csv.field(std::string("vacuity"));
    for (int k = 0; k < data.g.num_classes; ++k) csv.field("alpha_" + std::to_string(k));
    csv.endrow();
    double vac_train = 0.0, vac_rest = 0.0;
    int n_rest = 0;
    for (int i = 0; i < data.g.num_nodes(); ++i) {
        double v = vacuity(DirichletParams{alpha_hat.row(i)});
        (in_train[i] ? vac_train : vac_rest) += v;
        if (!in_train[i]) ++n_rest;
        csv.field(i);
        csv.field(data.g.labels[i]);
        csv.field(in_train[i] ? 1 : 0);
        csv.field(v);
        for (int k = 0; k < data.g.num_classes; ++k) csv.field(alpha_hat(i, k));
        csv.endrow();
    }
    nlohmann::json summary;
    summary["task"] = "gkde";
    summary["nodes"] = data.g.num_nodes();
    summary["classes"] = data.g.num_classes;
    summary["train_nodes"] = data.train_ids.size();
    summary["mean_vacuity_train"] = vac_train / std::max<size_t>(1, data.train_ids.size());
    summary["mean_vacuity_other"] = n_rest ? vac_rest / n_rest : 0.0;
    write_text_file(out + "/metrics.csv", csv.str());
    write_text_file(out + "/summary.json", summary.dump(2) + "\n");
    write_text_file(out + "/config.echo", cfg.echo());
    return 0;
}

int cmd_train(const CommonArgs& args) {
    KvConfig cfg = load_config(args);
    // experiment = graph-ood | graph-misclass runs the multi-seed AUROC
    // suite; the default is a single training run on one graph
    std::string experiment = cfg.get_str("experiment", "single");
    if (experiment == "graph-ood" || experiment == "graph-misclass")
        return run_experiment(experiment, cfg, args.out_dir.empty() ? "out/" + experiment
                                                                    : args.out_dir);
    if (experiment != "single") throw std::runtime_error("unknown experiment: " + experiment);
    cfg.set("task", "train");
    uint64_t seed = cfg.get_u64("seed", 1);
    cfg.set("seed", std::to_string(seed));
    std::string out = out_or(args, "out/train");
    fs::create_directories(out);
    SbmData data = load_or_generate_graph(cfg);
    TrainConfig tc;
    tc.seed = seed;
    resolve_train_config(cfg, tc);
    SgnnResult r = train_sgnn(data.g, data.train_ids, tc);

    std::ostringstream log;
    for (size_t t = 0; t < r.loss_history.size(); ++t) {
        nlohmann::json row{{"epoch", t + 1},
                           {"loss", r.loss_history[t]},
                           {"term_enn", r.term_enn[t]},
                           {"term_prior", r.term_prior[t]},
                           {"term_teacher", r.term_teacher[t]}};
        log << row.dump() << "\n";
    }
    write_text_file(out + "/train_log.jsonl", log.str());
    save_checkpoint(r.net, out + "/checkpoint.json");

    std::vector<char> in_train(data.g.num_nodes(), 0);
    for (int i : data.train_ids) in_train[i] = 1;
    CsvBuilder csv;
    for (const char* h : {"node", "label", "is_train", "is_ood", "pred", "vacuity", "dissonance",
                          "entropy", "aleatoric", "epistemic"})
        csv.field(std::string(h));
    csv.endrow();
    int correct = 0, evaluated = 0;
    for (int i = 0; i < data.g.num_nodes(); ++i) {
        int pred = argmax(r.mean_probs.row(i));
        if (!in_train[i] && !data.node_is_ood[i]) {
            ++evaluated;
            if (pred == data.g.labels[i]) ++correct;
        }
        csv.field(i);
        csv.field(data.g.labels[i]);
        csv.field(in_train[i] ? 1 : 0);
        csv.field(data.node_is_ood[i] ? 1 : 0);
        csv.field(pred);
        csv.field(r.vacuity[i]);
        csv.field(r.dissonance[i]);
        csv.field(r.entropy[i]);
        csv.field(r.aleatoric[i]);
        csv.field(r.epistemic[i]);
        csv.endrow();
    }
    nlohmann::json summary;
    summary["task"] = "train";
    summary["final_loss"] = r.loss_history.empty() ? 0.0 : r.loss_history.back();
    summary["iters_run"] = r.loss_history.size();
    summary["eval_accuracy"] = evaluated ? static_cast<double>(correct) / evaluated : 0.0;
    summary["eval_nodes"] = evaluated;
    write_text_file(out + "/metrics.csv", csv.str());
    write_text_file(out + "/summary.json", summary.dump(2) + "\n");
    write_text_file(out + "/config.echo", cfg.echo());
    return 0;
}

int cmd_rssl_run(const CommonArgs& args) {
    KvConfig cfg = load_config(args);
    cfg.set("task", "rssl-run");
    uint64_t seed = cfg.get_u64("seed", 1);
    cfg.set("seed", std::to_string(seed));
    std::string out = out_or(args, "out/rssl-run");
    fs::create_directories(out);

    std::string kind_s = cfg.get_str("ood_kind", "faraway");
    cfg.set("ood_kind", kind_s);
    TwoMoonsCompareParams defaults = two_moons_defaults(detail::parse_ood_kind(kind_s));
    TwoMoonsConfig mc = defaults.data;
    mc.seed = seed;
    resolve_moons_config(cfg, mc);
    RsslConfig rc = defaults.rssl;
    rc.seed = seed + 500;
    resolve_rssl_config(cfg, rc);
    RsslData data = gen_two_moons(mc);
    RsslResult r = run_robust_ssl(data, rc);

    nlohmann::json summary;
    summary["task"] = "rssl-run";
    summary["final_test_acc"] = r.final_test_acc;
    summary["final_val_loss"] = r.final_val_loss;
    if (!r.log.empty()) {
        summary["mean_w_id"] = r.log.back().mean_w_id;
        summary["mean_w_ood"] = r.log.back().mean_w_ood;
    }
    summary["grad_norm_history"] = r.grad_norm_history;
    write_text_file(out + "/metrics.csv", rssl_log_csv(r.log));
    write_text_file(out + "/summary.json", summary.dump(2) + "\n");
    write_text_file(out + "/config.echo", cfg.echo());
    return 0;
}

int cmd_earlydet_run(const CommonArgs& args, const std::string& stream_flag) {
    KvConfig cfg = load_config(args);
    cfg.set("task", "earlydet-run");
    uint64_t seed = cfg.get_u64("seed", 1);
    cfg.set("seed", std::to_string(seed));
    std::string out = out_or(args, "out/earlydet-run");
    fs::create_directories(out);

    EarlyDetectParams p = early_detect_defaults();
    p.base_seed = seed;
    resolve_early_detect_params(cfg, p);
    std::string head_s = cfg.get_str("head", "wbc");
    cfg.set("head", head_s);
    DetectorConfig det = p.det;
    if (head_s == "wbc") det.head = DetectorHead::Wbc;
    else if (head_s == "umss") det.head = DetectorHead::Umss;
    else if (head_s == "prob") det.head = DetectorHead::Prob;
    else throw std::runtime_error("unknown head: " + head_s);

    // model: a stored checkpoint wins, otherwise train on generated streams
    Net net;
    std::string ckpt = cfg.get_str("checkpoint", "");
    cfg.set("checkpoint", ckpt);
    if (!ckpt.empty()) {
        net = load_checkpoint(ckpt);
    } else {
        std::vector<Mat> feats, labs;
        for (int i = 0; i < p.n_train_streams; ++i) {
            EventStream s = detail::make_event_stream(
                p, i % p.num_classes, p.base_seed + 100 + static_cast<uint64_t>(i),
                0x9e3779b97f4a7c15ull);
            feats.push_back(std::move(s.features));
            labs.push_back(std::move(s.labels));
        }
        MtennConfig mcfg = p.mtenn;
        mcfg.seed = p.base_seed + 17;
        net = train_mtenn(feats, labs, mcfg).net;
    }

    if (det.head == DetectorHead::Umss) {
        if (cfg.values.count("umss_threshold")) {
            det.umss_threshold = cfg.get_double("umss_threshold", det.umss_threshold);
        } else {
            Vec stats;
            for (int i = 0; i < p.n_null_cal; ++i) {
                EventStream s =
                    detail::make_null_stream(p, p.base_seed + 5000 + static_cast<uint64_t>(i));
                Vec st = umss_final_statistics(net, s.features, det);
                stats.insert(stats.end(), st.begin(), st.end());
            }
            det.umss_threshold = calibrate_umss_threshold(stats, p.cal_q);
        }
        cfg.set("umss_threshold", fmt_g17(det.umss_threshold));
    }

    // stream: explicit file (flag or config key) or a generated event stream
    Mat features, labels;
    bool have_labels = false;
    std::string stream_file = !stream_flag.empty() ? stream_flag : cfg.get_str("stream_file", "");
    cfg.set("stream_file", stream_file);
    if (!stream_file.empty()) {
        StreamData sd = read_stream_file(stream_file);
        features = std::move(sd.features);
        labels = std::move(sd.labels);
        have_labels = labels.rows == features.rows && labels.cols > 0;
    } else {
        EventStreamConfig ec;
        ec.T = p.T;
        ec.num_classes = p.num_classes;
        ec.noise = p.noise;
        ec.feature_dim = p.feature_dim;
        ec.signal_strength = p.signal;
        ec.seed = seed + 7777;
        ec.pattern_seed = p.pattern_seed;
        EventSpec ev;
        ev.cls = static_cast<int>(cfg.get_int("event_class", 0));
        ev.onset = static_cast<int>(cfg.get_int("event_onset", 20));
        ev.offset = static_cast<int>(cfg.get_int("event_offset", 40));
        cfg.set("event_class", std::to_string(ev.cls));
        cfg.set("event_onset", std::to_string(ev.onset));
        cfg.set("event_offset", std::to_string(ev.offset));
        ec.events.push_back(ev);
        EventStream s = gen_event_stream(ec);
        features = std::move(s.features);
        labels = std::move(s.labels);
        have_labels = true;
    }

    DetectionTrace tr = run_early_detection(net, features, det);
    const int T = tr.decisions.rows, K = tr.decisions.cols;
    CsvBuilder csv;
    for (const char* h : {"t", "class", "decision", "b", "d", "u", "statistic"})
        csv.field(std::string(h));
    csv.endrow();
    for (int t = 0; t < T; ++t)
        for (int k = 0; k < K; ++k) {
            csv.field(t);
            csv.field(k);
            csv.field(tr.decisions(t, k) > 0.5 ? 1 : 0);
            csv.field(tr.b(t, k));
            csv.field(tr.d(t, k));
            csv.field(tr.u(t, k));
            csv.field(tr.stat(t, k));
            csv.endrow();
        }

    nlohmann::json summary;
    summary["task"] = "earlydet-run";
    summary["head"] = head_s;
    nlohmann::json fires = nlohmann::json::array();
    for (int k = 0; k < K; ++k) {
        int first = -1;
        for (int t = 0; t < T && first < 0; ++t)
            if (tr.decisions(t, k) > 0.5) first = t;
        fires.push_back(first);
    }
    summary["first_fire"] = fires;
    if (have_labels) {
        DetectionMetrics m =
            summarize_outcomes(detection_outcomes(tr.decisions, labels, det.min_delay, 0));
        summary["metrics"] = detection_metrics_json(m);
    }
    write_text_file(out + "/metrics.csv", csv.str());
    write_text_file(out + "/summary.json", summary.dump(2) + "\n");
    write_text_file(out + "/config.echo", cfg.echo());
    return 0;
}

int cmd_gen(const CommonArgs& args) {
    KvConfig cfg = load_config(args);
    cfg.set("task", "gen");
    uint64_t seed = cfg.get_u64("seed", 1);
    cfg.set("seed", std::to_string(seed));
    std::string kind = cfg.get_str("kind", "two-moons");
    cfg.set("kind", kind);
    std::string out = out_or(args, "out/gen");
    fs::create_directories(out);

    CsvBuilder inventory;
    inventory.field(std::string("file"));
    inventory.field(std::string("rows"));
    inventory.endrow();
    nlohmann::json summary;
    summary["task"] = "gen";
    summary["kind"] = kind;

    if (kind == "two-moons") {
        TwoMoonsConfig mc;
        mc.seed = seed;
        resolve_moons_config(cfg, mc);
        RsslData data = gen_two_moons(mc);
        CsvBuilder csv;
        for (const char* h : {"split", "x0", "x1", "label", "is_ood"})
            csv.field(std::string(h));
        csv.endrow();
        auto emit = [&](const char* split, const Mat& x, const std::vector<int>* y,
                        const std::vector<char>* ood) {
            for (int i = 0; i < x.rows; ++i) {
                csv.field(std::string(split));
                csv.field(x(i, 0));
                csv.field(x(i, 1));
                csv.field(y ? (*y)[i] : -1);
                csv.field(ood && (*ood)[i] ? 1 : 0);
                csv.endrow();
            }
        };
        emit("labeled", data.x_lab, &data.y_lab, nullptr);
        emit("unlabeled", data.x_unl, nullptr, &data.unl_is_ood);
        emit("val", data.x_val, &data.y_val, nullptr);
        emit("test", data.x_test, &data.y_test, nullptr);
        write_text_file(out + "/data.csv", csv.str());
        inventory.field(std::string("data.csv"));
        inventory.field(data.x_lab.rows + data.x_unl.rows + data.x_val.rows + data.x_test.rows);
        inventory.endrow();
        summary["labeled"] = data.x_lab.rows;
        summary["unlabeled"] = data.x_unl.rows;
        summary["val"] = data.x_val.rows;
        summary["test"] = data.x_test.rows;
    } else if (kind == "sbm") {
        SbmConfig sc;
        sc.seed = seed;
        resolve_sbm_config(cfg, sc);
        SbmData data = gen_sbm_graph(sc);
        write_graph(data.g, out + "/graph.txt");
        write_node_ids(data.train_ids, out + "/train_ids.txt");
        std::vector<int> ood_ids;
        for (int i = 0; i < data.g.num_nodes(); ++i)
            if (data.node_is_ood[i]) ood_ids.push_back(i);
        write_node_ids(ood_ids, out + "/ood_ids.txt");
        inventory.field(std::string("graph.txt"));
        inventory.field(data.g.num_nodes());
        inventory.endrow();
        inventory.field(std::string("train_ids.txt"));
        inventory.field(static_cast<int>(data.train_ids.size()));
        inventory.endrow();
        inventory.field(std::string("ood_ids.txt"));
        inventory.field(static_cast<int>(ood_ids.size()));
        inventory.endrow();
        summary["nodes"] = data.g.num_nodes();
        summary["edges"] = data.g.edges.size();
        summary["train_nodes"] = data.train_ids.size();
        summary["ood_nodes"] = ood_ids.size();
    } else if (kind == "stream") {
        int n_streams = static_cast<int>(cfg.get_int("n_streams", 1));
        cfg.set("n_streams", std::to_string(n_streams));
        EarlyDetectParams p = early_detect_defaults();
        p.base_seed = seed;
        resolve_early_detect_params(cfg, p);
        for (int i = 0; i < n_streams; ++i) {
            EventStream s = detail::make_event_stream(
                p, i % p.num_classes, seed + 100 + static_cast<uint64_t>(i),
                0x9e3779b97f4a7c15ull);
            std::string name = "stream_" + std::to_string(i) + ".jsonl";
            std::ostringstream ss;
            write_stream_jsonl(ss, s.features, s.labels);
            write_text_file(out + "/" + name, ss.str());
            inventory.field(name);
            inventory.field(s.features.rows);
            inventory.endrow();
        }
        summary["streams"] = n_streams;
        summary["stream_len"] = p.T;
    } else {
        throw std::runtime_error("unknown kind: " + kind);
    }

    write_text_file(out + "/metrics.csv", inventory.str());
    write_text_file(out + "/summary.json", summary.dump(2) + "\n");
    write_text_file(out + "/config.echo", cfg.echo());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multidimensional uncertainty toolkit"};
    app.require_subcommand(1);

    // uq profile
    CLI::App* uq = app.add_subcommand("uq", "uncertainty profiles");
    uq->require_subcommand(1);
    CLI::App* uq_profile = uq->add_subcommand("profile", "profile a Dirichlet opinion");
    CommonArgs uq_args;
    std::string alpha_s;
    int mc = -1;
    bool dump_opinions = false;
    add_common(uq_profile, uq_args);
    uq_profile->add_option("--alpha", alpha_s, "comma-separated Dirichlet parameters");
    uq_profile->add_option("--mc", mc, "Monte-Carlo cross-check sample count");
    uq_profile->add_flag("--dump-opinions", dump_opinions, "include the opinion JSON");

    CLI::App* gkde = app.add_subcommand("gkde", "graph kernel Dirichlet prior");
    CommonArgs gkde_args;
    add_common(gkde, gkde_args);

    CLI::App* train = app.add_subcommand("train", "train the evidence GCN");
    CommonArgs train_args;
    add_common(train, train_args);

    CLI::App* rssl = app.add_subcommand("rssl", "reweighted semi-supervised learning");
    rssl->require_subcommand(1);
    CLI::App* rssl_run = rssl->add_subcommand("run", "single reweighted run");
    CommonArgs rssl_run_args;
    add_common(rssl_run, rssl_run_args);
    CLI::App* rssl_cmp = rssl->add_subcommand("compare", "baseline vs reweighted over seeds");
    CommonArgs rssl_cmp_args;
    add_common(rssl_cmp, rssl_cmp_args);

    CLI::App* ed = app.add_subcommand("earlydet", "sequential early detection");
    ed->require_subcommand(1);
    CLI::App* ed_run = ed->add_subcommand("run", "decisions for one stream");
    CommonArgs ed_run_args;
    std::string stream_flag;
    add_common(ed_run, ed_run_args);
    ed_run->add_option("--stream", stream_flag, "stream JSON-lines file");
    CLI::App* ed_bench = ed->add_subcommand("benchmark", "head comparison benchmark");
    CommonArgs ed_bench_args;
    add_common(ed_bench, ed_bench_args);

    CLI::App* gen = app.add_subcommand("gen", "synthetic data generators");
    CommonArgs gen_args;
    add_common(gen, gen_args);

    CLI::App* verify = app.add_subcommand("verify", "theorem and proposition suite");
    CommonArgs verify_args;
    bool quick = false;
    std::string checks;
    add_common(verify, verify_args);
    verify->add_flag("--quick", quick, "exact-math subset only");
    verify->add_option("--checks", checks, "comma-separated check names");

    CLI11_PARSE(app, argc, argv);

    try {
        if (uq_profile->parsed()) return cmd_uq_profile(uq_args, alpha_s, mc, dump_opinions);
        if (gkde->parsed()) return cmd_gkde(gkde_args);
        if (train->parsed()) return cmd_train(train_args);
        if (rssl_run->parsed()) return cmd_rssl_run(rssl_run_args);
        if (rssl_cmp->parsed()) {
            KvConfig cfg = load_config(rssl_cmp_args);
            return run_experiment("robust-ssl", cfg, out_or(rssl_cmp_args, "out/robust-ssl"));
        }
        if (ed_run->parsed()) return cmd_earlydet_run(ed_run_args, stream_flag);
        if (ed_bench->parsed()) {
            KvConfig cfg = load_config(ed_bench_args);
            return run_experiment("early-detect", cfg, out_or(ed_bench_args, "out/early-detect"));
        }
        if (gen->parsed()) return cmd_gen(gen_args);
        if (verify->parsed()) {
            KvConfig cfg = load_config(verify_args);
            if (!checks.empty()) cfg.set("checks", checks);
            else if (quick) cfg.set("checks", "quick");
            return run_verify_task(cfg, out_or(verify_args, "out/verify"), std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::cerr << "error: no subcommand\n";
    return 2;
}
