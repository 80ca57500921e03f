#pragma once

#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "datagen.hpp"
#include "earlydet.hpp"
#include "gkde.hpp"
#include "ranking.hpp"
#include "robust_ssl.hpp"
#include "serialize.hpp"
#include "trainers.hpp"
#include "uncertainty.hpp"

namespace uqkit {

// ---------------------------------------------------------------- graph ----

struct GraphUncertaintyParams {
    bool misclass = false;
    int n_seeds = 10;
    SbmConfig sbm;
    TrainConfig train;
    uint64_t base_seed = 1;
};

inline GraphUncertaintyParams graph_uncertainty_defaults(bool misclass) {
    GraphUncertaintyParams p;
    p.misclass = misclass;
    p.sbm.num_classes = 4;
    p.sbm.nodes_per_class = 30;
    p.sbm.p_in = 0.25;
    p.sbm.p_out = 0.02;
    p.sbm.feature_dim = 8;
    p.sbm.train_per_class = 20;
    p.train.hidden = {16};
    p.train.iters = 200;
    p.train.lr = 0.2;
    p.train.dropout = 0.1;
    p.train.mc_samples = 100;
    // at this width a relu evidence head can be born dead; use the softplus toggle
    p.train.evidence_act = Activation::Softplus;
    if (misclass) {
        // all classes labeled; weaker features so the model actually errs
        p.sbm.ood_classes = 0;
        p.sbm.mean_scale = 0.5;
        p.train.loss.lambda1 = 0.001;
    } else {
        p.sbm.ood_classes = 1;
        p.sbm.mean_scale = 1.0;
        p.train.loss.lambda1 = 0.1;
    }
    return p;
}

constexpr const char* kGraphMeasures[5] = {"vacuity", "dissonance", "aleatoric", "epistemic",
                                           "entropy"};

struct GraphUncertaintyOutcome {
    Mat auroc;  // n_seeds x 5, -1 marks a degenerate seed/measure
    Mat aupr;
    Vec accuracy;  // per-seed accuracy over evaluated ID nodes
    Vec mean_auroc = Vec(5, 0.0);
    Vec mean_aupr = Vec(5, 0.0);
};

inline GraphUncertaintyOutcome run_graph_uncertainty(const GraphUncertaintyParams& p) {
    GraphUncertaintyOutcome out;
    out.auroc = Mat(p.n_seeds, 5, -1.0);
    out.aupr = Mat(p.n_seeds, 5, -1.0);
    out.accuracy.assign(p.n_seeds, 0.0);
    std::vector<int> counted(5, 0);
    for (int s = 0; s < p.n_seeds; ++s) {
        SbmConfig sc = p.sbm;
        sc.seed = p.base_seed + static_cast<uint64_t>(s);
        SbmData data = gen_sbm_graph(sc);
        TrainConfig tc = p.train;
        tc.seed = p.base_seed + 1000 + static_cast<uint64_t>(s);
        SgnnResult r = train_sgnn(data.g, data.train_ids, tc);

        std::vector<char> in_train(data.g.num_nodes(), 0);
        for (int i : data.train_ids) in_train[i] = 1;

        RankingScores scores[5];
        int correct = 0, id_eval = 0;
        for (int i = 0; i < data.g.num_nodes(); ++i) {
            if (in_train[i]) continue;
            int label;
            if (p.misclass) {
                if (data.node_is_ood[i]) continue;  // misclassification is an ID notion
                int pred = argmax(r.mean_probs.row(i));
                label = pred != data.g.labels[i] ? 1 : 0;
                ++id_eval;
                if (!label) ++correct;
            } else {
                label = data.node_is_ood[i] ? 1 : 0;
                if (!data.node_is_ood[i]) {
                    ++id_eval;
                    if (argmax(r.mean_probs.row(i)) == data.g.labels[i]) ++correct;
                }
            }
            double vals[5] = {r.vacuity[i], r.dissonance[i], r.aleatoric[i], r.epistemic[i],
                              r.entropy[i]};
            for (int m = 0; m < 5; ++m) {
                scores[m].scores.push_back(vals[m]);
                scores[m].labels.push_back(label);
            }
        }
        out.accuracy[s] = id_eval ? static_cast<double>(correct) / id_eval : 0.0;
        for (int m = 0; m < 5; ++m) {
            bool has_pos = false, has_neg = false;
            for (int l : scores[m].labels) (l ? has_pos : has_neg) = true;
            if (!has_pos || !has_neg) continue;  // degenerate seed, leave at -1
            RankingMetrics rm = ranking_metrics(scores[m]);
            out.auroc(s, m) = rm.auroc;
            out.aupr(s, m) = rm.aupr;
            out.mean_auroc[m] += rm.auroc;
            out.mean_aupr[m] += rm.aupr;
            counted[m]++;
        }
    }
    for (int m = 0; m < 5; ++m) {
        if (counted[m]) {
            out.mean_auroc[m] /= counted[m];
            out.mean_aupr[m] /= counted[m];
        } else {
            out.mean_auroc[m] = -1.0;
            out.mean_aupr[m] = -1.0;
        }
    }
    return out;
}

// ------------------------------------------------------------ two moons ----

struct TwoMoonsCompareParams {
    int n_seeds = 10;
    TwoMoonsConfig data;
    RsslConfig rssl;
    bool run_baseline = true;
    bool run_robust = true;
    uint64_t base_seed = 1;
};

inline TwoMoonsCompareParams two_moons_defaults(OodKind kind) {
    TwoMoonsCompareParams p;
    p.data.ood_kind = kind;
    p.data.n_unlabeled = 300;
    p.data.noise = 0.1;
    p.data.ood_ratio = 0.5;
    p.data.labeled_per_class = 6;
    p.data.n_val = 100;
    p.data.n_test = 400;
    p.data.faraway_scale = 60.0;
    p.rssl.bilevel.method = WeightMethod::Meta;
    p.rssl.bilevel.inner_steps = 3;
    p.rssl.bilevel.inner_lr = 0.5;
    p.rssl.bilevel.neumann_terms = 5;
    p.rssl.bilevel.w_lr = 10.0;
    p.rssl.bilevel.w_step_cap = 0.05;
    p.rssl.bilevel.update_period = 5;
    p.rssl.bilevel.clusters = 20;
    p.rssl.unl_mode = UnlabeledMode::PseudoLabel;
    p.rssl.pl_threshold = 0.95;
    p.rssl.unl_coef = 2.0;
    p.rssl.hidden = {16, 16};
    p.rssl.iters = 600;
    p.rssl.lr = 0.1;
    p.rssl.momentum = 0.0;
    p.rssl.log_every = 20;
    return p;
}

struct TwoMoonsRun {
    int seed_index = 0;
    bool robust = false;
    RsslResult result;
};

struct TwoMoonsOutcome {
    std::vector<TwoMoonsRun> runs;
    Vec baseline_acc, robust_acc;
    Vec mean_w_id, mean_w_ood;  // robust runs
    double mean_baseline = -1.0, mean_robust = -1.0;
};

inline TwoMoonsOutcome run_two_moons_comparison(const TwoMoonsCompareParams& p) {
    TwoMoonsOutcome out;
    for (int s = 0; s < p.n_seeds; ++s) {
        TwoMoonsConfig dc = p.data;
        dc.seed = p.base_seed + static_cast<uint64_t>(s);
        RsslData data = gen_two_moons(dc);
        for (int variant = 0; variant < 2; ++variant) {
            bool robust = variant == 1;
            if ((robust && !p.run_robust) || (!robust && !p.run_baseline)) continue;
            RsslConfig rc = p.rssl;
            rc.reweight = robust;
            rc.seed = p.base_seed + 500 + static_cast<uint64_t>(s);
            TwoMoonsRun run;
            run.seed_index = s;
            run.robust = robust;
            run.result = run_robust_ssl(data, rc);
            if (robust) {
                out.robust_acc.push_back(run.result.final_test_acc);
                if (!run.result.log.empty()) {
                    out.mean_w_id.push_back(run.result.log.back().mean_w_id);
                    out.mean_w_ood.push_back(run.result.log.back().mean_w_ood);
                }
            } else {
                out.baseline_acc.push_back(run.result.final_test_acc);
            }
            out.runs.push_back(std::move(run));
        }
    }
    if (!out.baseline_acc.empty()) out.mean_baseline = sum(out.baseline_acc) / out.baseline_acc.size();
    if (!out.robust_acc.empty()) out.mean_robust = sum(out.robust_acc) / out.robust_acc.size();
    return out;
}

// -------------------------------------------------------- early detection ----

struct EarlyDetectParams {
    int num_classes = 2;
    int T = 60;
    int feature_dim = 8;
    int n_train_streams = 30;
    int n_bench = 200;
    int n_null_cal = 500;
    int n_null_test = 1000;
    int null_T = 40;
    int event_len = 20;
    int onset_min = 15;
    int onset_max = 34;
    double noise = 0.3;
    double signal = 2.0;
    MtennConfig mtenn;
    DetectorConfig det;
    double cal_q = 0.05;    // calibration confidence for the false-alarm check
    double bench_q = 0.01;  // tighter quantile for the running benchmark detector
    uint64_t base_seed = 1;
    uint64_t pattern_seed = 9001;
};

inline EarlyDetectParams early_detect_defaults() {
    EarlyDetectParams p;
    p.mtenn.hidden = 16;
    p.mtenn.iters = 150;
    p.mtenn.lr = 0.05;
    p.det.window = 5;
    p.det.rho = 0.9;
    p.det.vacuity_threshold = 0.9;
    return p;
}

struct EarlyDetectOutcome {
    double false_alarm_rate = 0.0;
    double cal_threshold = 0.0;
    double bench_threshold = 0.0;
    DetectionMetrics wbc, umss, prob;
    Vec train_loss;
};

namespace detail {

inline EventStream make_event_stream(const EarlyDetectParams& p, int cls, uint64_t seed,
                                     uint64_t onset_salt) {
    EventStreamConfig ec;
    ec.T = p.T;
    ec.num_classes = p.num_classes;
    ec.noise = p.noise;
    ec.feature_dim = p.feature_dim;
    ec.signal_strength = p.signal;
    ec.seed = seed;
    ec.pattern_seed = p.pattern_seed;
    Rng r(seed ^ onset_salt);
    int onset = p.onset_min + r.uniform_int(p.onset_max - p.onset_min + 1);
    int offset = std::min(p.T, onset + p.event_len);
    ec.events.push_back({cls, onset, offset});
    return gen_event_stream(ec);
}

inline EventStream make_null_stream(const EarlyDetectParams& p, uint64_t seed) {
    EventStreamConfig ec;
    ec.T = p.null_T;
    ec.num_classes = p.num_classes;
    ec.noise = p.noise;
    ec.feature_dim = p.feature_dim;
    ec.signal_strength = p.signal;
    ec.seed = seed;
    ec.pattern_seed = p.pattern_seed;
    return gen_event_stream(ec);
}

}  // namespace detail

inline EarlyDetectOutcome run_early_detect(const EarlyDetectParams& p) {
    // phase one: train the temporal evidence net on labeled event streams
    std::vector<Mat> feats, labs;
    for (int i = 0; i < p.n_train_streams; ++i) {
        EventStream s = detail::make_event_stream(p, i % p.num_classes,
                                                  p.base_seed + 100 + static_cast<uint64_t>(i),
                                                  0x9e3779b97f4a7c15ull);
        feats.push_back(std::move(s.features));
        labs.push_back(std::move(s.labels));
    }
    MtennConfig mc = p.mtenn;
    mc.seed = p.base_seed + 17;
    MtennResult trained = train_mtenn(feats, labs, mc);

    EarlyDetectOutcome out;
    out.train_loss = trained.loss_history;

    // threshold calibration on event-free history
    Vec cal_stats;
    for (int i = 0; i < p.n_null_cal; ++i) {
        EventStream s = detail::make_null_stream(p, p.base_seed + 5000 + static_cast<uint64_t>(i));
        Vec st = umss_final_statistics(trained.net, s.features, p.det);
        cal_stats.insert(cal_stats.end(), st.begin(), st.end());
    }
    out.cal_threshold = calibrate_umss_threshold(cal_stats, p.cal_q);
    out.bench_threshold = calibrate_umss_threshold(cal_stats, p.bench_q);

    // false-alarm rate on fresh null streams, one decision per stream/class
    int fired = 0, trials = 0;
    for (int i = 0; i < p.n_null_test; ++i) {
        EventStream s = detail::make_null_stream(p, p.base_seed + 20000 + static_cast<uint64_t>(i));
        Vec st = umss_final_statistics(trained.net, s.features, p.det);
        for (double v : st) {
            ++trials;
            if (v > out.cal_threshold) ++fired;
        }
    }
    out.false_alarm_rate = trials ? static_cast<double>(fired) / trials : 0.0;

    // running benchmark: the three heads on the same streams
    std::vector<ClassOutcome> oc_wbc, oc_umss, oc_prob;
    for (int i = 0; i < p.n_bench; ++i) {
        EventStream s = detail::make_event_stream(p, i % p.num_classes,
                                                  p.base_seed + 40000 + static_cast<uint64_t>(i),
                                                  0xda942042e4dd58b5ull);
        DetectorConfig dc = p.det;
        dc.head = DetectorHead::Wbc;
        DetectionTrace tw = run_early_detection(trained.net, s.features, dc);
        dc.head = DetectorHead::Umss;
        dc.umss_threshold = out.bench_threshold;
        DetectionTrace tu = run_early_detection(trained.net, s.features, dc);
        dc.head = DetectorHead::Prob;
        DetectionTrace tp = run_early_detection(trained.net, s.features, dc);
        for (ClassOutcome& o : detection_outcomes(tw.decisions, s.labels, p.det.min_delay, i))
            oc_wbc.push_back(o);
        for (ClassOutcome& o : detection_outcomes(tu.decisions, s.labels, p.det.min_delay, i))
            oc_umss.push_back(o);
        for (ClassOutcome& o : detection_outcomes(tp.decisions, s.labels, p.det.min_delay, i))
            oc_prob.push_back(o);
    }
    out.wbc = summarize_outcomes(std::move(oc_wbc));
    out.umss = summarize_outcomes(std::move(oc_umss));
    out.prob = summarize_outcomes(std::move(oc_prob));
    return out;
}

// ------------------------------------------------------------- dispatch ----

namespace detail {

inline double take_d(KvConfig& cfg, const std::string& key, double fallback) {
    double v = cfg.get_double(key, fallback);
    cfg.set(key, fmt_g17(v));
    return v;
}
inline long long take_i(KvConfig& cfg, const std::string& key, long long fallback) {
    long long v = cfg.get_int(key, fallback);
    cfg.set(key, std::to_string(v));
    return v;
}
inline uint64_t take_u(KvConfig& cfg, const std::string& key, uint64_t fallback) {
    uint64_t v = cfg.get_u64(key, fallback);
    cfg.set(key, std::to_string(v));
    return v;
}
inline bool take_b(KvConfig& cfg, const std::string& key, bool fallback) {
    bool v = cfg.get_bool(key, fallback);
    cfg.set(key, v ? "true" : "false");
    return v;
}
inline std::string take_s(KvConfig& cfg, const std::string& key, const std::string& fallback) {
    std::string v = cfg.get_str(key, fallback);
    cfg.set(key, v);
    return v;
}

inline OodKind parse_ood_kind(const std::string& s) {
    if (s == "faraway") return OodKind::Faraway;
    if (s == "boundary") return OodKind::Boundary;
    if (s == "mixed") return OodKind::Mixed;
    throw std::runtime_error("unknown ood_kind: " + s);
}

}  // namespace detail

inline void resolve_train_config(KvConfig& cfg, TrainConfig& tc) {
    using namespace detail;
    tc.hidden = parse_int_list(take_s(cfg, "train_hidden", "16"));
    tc.iters = static_cast<int>(take_i(cfg, "train_iters", tc.iters));
    tc.lr = take_d(cfg, "train_lr", tc.lr);
    tc.momentum = take_d(cfg, "train_momentum", tc.momentum);
    tc.dropout = take_d(cfg, "train_dropout", tc.dropout);
    tc.mc_samples = static_cast<int>(take_i(cfg, "train_mc_samples", tc.mc_samples));
    tc.patience = static_cast<int>(take_i(cfg, "train_patience", tc.patience));
    tc.gkde_sigma = take_d(cfg, "gkde_sigma", tc.gkde_sigma);
    tc.loss.lambda1 = take_d(cfg, "lambda1", tc.loss.lambda1);
    tc.loss.lambda2 = take_d(cfg, "lambda2", tc.loss.lambda2);
    tc.loss.lambda2_schedule = take_b(cfg, "lambda2_schedule", tc.loss.lambda2_schedule);
    tc.loss.lambda2_rampup = static_cast<int>(take_i(cfg, "lambda2_rampup", tc.loss.lambda2_rampup));
    std::string act =
        take_s(cfg, "evidence_act", tc.evidence_act == Activation::Relu ? "relu" : "softplus");
    if (act == "relu") tc.evidence_act = Activation::Relu;
    else if (act == "softplus") tc.evidence_act = Activation::Softplus;
    else throw std::runtime_error("unknown evidence_act: " + act);
}

inline void resolve_sbm_config(KvConfig& cfg, SbmConfig& sc) {
    using namespace detail;
    sc.num_classes = static_cast<int>(take_i(cfg, "sbm_classes", sc.num_classes));
    sc.nodes_per_class = static_cast<int>(take_i(cfg, "sbm_nodes_per_class", sc.nodes_per_class));
    sc.p_in = take_d(cfg, "sbm_p_in", sc.p_in);
    sc.p_out = take_d(cfg, "sbm_p_out", sc.p_out);
    sc.feature_dim = static_cast<int>(take_i(cfg, "sbm_feature_dim", sc.feature_dim));
    sc.train_per_class = static_cast<int>(take_i(cfg, "sbm_train_per_class", sc.train_per_class));
    sc.ood_classes = static_cast<int>(take_i(cfg, "sbm_ood_classes", sc.ood_classes));
    sc.mean_scale = take_d(cfg, "sbm_mean_scale", sc.mean_scale);
}

inline void resolve_rssl_config(KvConfig& cfg, RsslConfig& rc) {
    using namespace detail;
    std::string method = take_s(cfg, "method", rc.bilevel.method == WeightMethod::Meta ? "meta" : "ift");
    if (method == "meta") rc.bilevel.method = WeightMethod::Meta;
    else if (method == "ift") rc.bilevel.method = WeightMethod::Ift;
    else throw std::runtime_error("unknown method: " + method);
    rc.bilevel.inner_steps = static_cast<int>(take_i(cfg, "inner_steps", rc.bilevel.inner_steps));
    rc.bilevel.inner_lr = take_d(cfg, "alpha_lr", rc.bilevel.inner_lr);
    rc.bilevel.neumann_terms = static_cast<int>(take_i(cfg, "neumann_terms", rc.bilevel.neumann_terms));
    rc.bilevel.w_lr = take_d(cfg, "beta_lr", rc.bilevel.w_lr);
    rc.bilevel.update_period = static_cast<int>(take_i(cfg, "update_period", rc.bilevel.update_period));
    rc.bilevel.clusters = static_cast<int>(take_i(cfg, "clusters", rc.bilevel.clusters));
    rc.bilevel.last_layer_only = take_b(cfg, "last_layer_only", rc.bilevel.last_layer_only);
    std::string reg = take_s(cfg, "regularizer", rc.bilevel.reg == RegMode::None
                                                     ? "none"
                                                     : rc.bilevel.reg == RegMode::L1 ? "l1" : "uncertainty");
    if (reg == "none") rc.bilevel.reg = RegMode::None;
    else if (reg == "uncertainty") rc.bilevel.reg = RegMode::Uncertainty;
    else if (reg == "l1") rc.bilevel.reg = RegMode::L1;
    else throw std::runtime_error("unknown regularizer: " + reg);
    rc.bilevel.reg_lambda = take_d(cfg, "reg_lambda", rc.bilevel.reg_lambda);
    rc.reweight = take_b(cfg, "reweight", rc.reweight);
    std::string mode = take_s(cfg, "unl_mode", rc.unl_mode == UnlabeledMode::PseudoLabel ? "pseudo" : "pi");
    if (mode == "pseudo") rc.unl_mode = UnlabeledMode::PseudoLabel;
    else if (mode == "pi") rc.unl_mode = UnlabeledMode::PiConsistency;
    else throw std::runtime_error("unknown unl_mode: " + mode);
    rc.pl_threshold = take_d(cfg, "pl_threshold", rc.pl_threshold);
    rc.unl_coef = take_d(cfg, "unl_coef", rc.unl_coef);
    rc.hidden = parse_int_list(take_s(cfg, "hidden", "16,16"));
    rc.dropout = take_d(cfg, "dropout", rc.dropout);
    rc.iters = static_cast<int>(take_i(cfg, "iters", rc.iters));
    rc.lr = take_d(cfg, "lr", rc.lr);
    rc.momentum = take_d(cfg, "momentum", rc.momentum);
    rc.log_every = static_cast<int>(take_i(cfg, "log_every", rc.log_every));
}

inline void resolve_moons_config(KvConfig& cfg, TwoMoonsConfig& mc) {
    using namespace detail;
    mc.n_unlabeled = static_cast<int>(take_i(cfg, "n_unlabeled", mc.n_unlabeled));
    mc.noise = take_d(cfg, "noise", mc.noise);
    mc.ood_kind = parse_ood_kind(take_s(cfg, "ood_kind", mc.ood_kind == OodKind::Faraway
                                                             ? "faraway"
                                                             : mc.ood_kind == OodKind::Boundary
                                                                   ? "boundary"
                                                                   : "mixed"));
    mc.ood_ratio = take_d(cfg, "ood_ratio", mc.ood_ratio);
    mc.labeled_per_class = static_cast<int>(take_i(cfg, "labeled_per_class", mc.labeled_per_class));
    mc.n_val = static_cast<int>(take_i(cfg, "n_val", mc.n_val));
    mc.n_test = static_cast<int>(take_i(cfg, "n_test", mc.n_test));
    mc.faraway_scale = take_d(cfg, "faraway_scale", mc.faraway_scale);
}

inline void resolve_early_detect_params(KvConfig& cfg, EarlyDetectParams& p) {
    using namespace detail;
    p.num_classes = static_cast<int>(take_i(cfg, "classes", p.num_classes));
    p.T = static_cast<int>(take_i(cfg, "stream_len", p.T));
    p.feature_dim = static_cast<int>(take_i(cfg, "feature_dim", p.feature_dim));
    p.n_train_streams = static_cast<int>(take_i(cfg, "n_train_streams", p.n_train_streams));
    p.n_bench = static_cast<int>(take_i(cfg, "n_bench", p.n_bench));
    p.n_null_cal = static_cast<int>(take_i(cfg, "n_null_cal", p.n_null_cal));
    p.n_null_test = static_cast<int>(take_i(cfg, "n_null_test", p.n_null_test));
    p.null_T = static_cast<int>(take_i(cfg, "null_len", p.null_T));
    p.event_len = static_cast<int>(take_i(cfg, "event_len", p.event_len));
    p.onset_min = static_cast<int>(take_i(cfg, "onset_min", p.onset_min));
    p.onset_max = static_cast<int>(take_i(cfg, "onset_max", p.onset_max));
    p.noise = take_d(cfg, "stream_noise", p.noise);
    p.signal = take_d(cfg, "signal", p.signal);
    p.mtenn.hidden = static_cast<int>(take_i(cfg, "mtenn_hidden", p.mtenn.hidden));
    p.mtenn.iters = static_cast<int>(take_i(cfg, "mtenn_iters", p.mtenn.iters));
    p.mtenn.lr = take_d(cfg, "mtenn_lr", p.mtenn.lr);
    std::string act = take_s(cfg, "evidence_act", p.mtenn.evidence_act == Activation::Relu ? "relu" : "softplus");
    if (act == "relu") p.mtenn.evidence_act = Activation::Relu;
    else if (act == "softplus") p.mtenn.evidence_act = Activation::Softplus;
    else throw std::runtime_error("unknown evidence_act: " + act);
    p.det.window = static_cast<int>(take_i(cfg, "window", p.det.window));
    p.det.rho = take_d(cfg, "rho", p.det.rho);
    p.det.vacuity_threshold = take_d(cfg, "vacuity_threshold", p.det.vacuity_threshold);
    p.det.min_delay = static_cast<int>(take_i(cfg, "min_delay", p.det.min_delay));
    p.cal_q = take_d(cfg, "q", p.cal_q);
    p.bench_q = take_d(cfg, "bench_q", p.bench_q);
    p.pattern_seed = take_u(cfg, "pattern_seed", p.pattern_seed);
}

inline std::string rssl_log_csv(const std::vector<RsslLogRow>& log) {
    CsvBuilder csv;
    for (const char* h : {"epoch", "train_loss", "val_loss", "test_acc", "mean_w_id", "mean_w_ood",
                          "grad_norm_w"})
        csv.field(std::string(h));
    csv.endrow();
    for (const RsslLogRow& r : log) {
        csv.field(r.epoch);
        csv.field(r.train_loss);
        csv.field(r.val_loss);
        csv.field(r.test_acc);
        csv.field(r.mean_w_id);
        csv.field(r.mean_w_ood);
        csv.field(r.grad_norm_w);
        csv.endrow();
    }
    return csv.str();
}

inline nlohmann::json detection_metrics_json(const DetectionMetrics& m) {
    return nlohmann::json{{"tp", m.tp},         {"fp", m.fp},         {"fn", m.fn},
                          {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
                          {"mean_delay", m.mean_delay}};
}

// Runs one experiment task and writes metrics.csv / summary.json /
// config.echo into out_dir. Returns a process exit code.
inline int run_experiment(const std::string& task, KvConfig cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    cfg.set("task", task);
    uint64_t seed = detail::take_u(cfg, "seed", 1);

    CsvBuilder csv;
    nlohmann::json summary;
    summary["task"] = task;
    summary["seed"] = seed;

    if (task == "uq-profile") {
        Vec alpha = parse_double_list(detail::take_s(cfg, "alpha", "1,1,1"));
        int mc = static_cast<int>(detail::take_i(cfg, "mc", 0));
        UncertaintyProfile prof = uncertainty_profile(DirichletParams{alpha}, mc, seed);
        for (const char* h : {"vacuity", "dissonance", "entropy", "aleatoric", "epistemic",
                              "expected_pairwise_kl", "aleatoric_mc", "aleatoric_mc_se"})
            csv.field(std::string(h));
        csv.endrow();
        csv.field(prof.vacuity);
        csv.field(prof.dissonance);
        csv.field(prof.entropy);
        csv.field(prof.aleatoric);
        csv.field(prof.epistemic);
        csv.field(prof.expected_pairwise_kl);
        csv.field(prof.aleatoric_mc);
        csv.field(prof.aleatoric_mc_se);
        csv.endrow();
        summary["profile"] = {{"vacuity", prof.vacuity},
                              {"dissonance", prof.dissonance},
                              {"entropy", prof.entropy},
                              {"aleatoric", prof.aleatoric},
                              {"epistemic", prof.epistemic},
                              {"expected_pairwise_kl", prof.expected_pairwise_kl},
                              {"mc_samples", prof.mc_samples},
                              {"aleatoric_mc", prof.aleatoric_mc},
                              {"aleatoric_mc_se", prof.aleatoric_mc_se}};
    } else if (task == "graph-ood" || task == "graph-misclass") {
        GraphUncertaintyParams p = graph_uncertainty_defaults(task == "graph-misclass");
        p.base_seed = seed;
        p.n_seeds = static_cast<int>(detail::take_i(cfg, "n_seeds", p.n_seeds));
        resolve_sbm_config(cfg, p.sbm);
        resolve_train_config(cfg, p.train);
        GraphUncertaintyOutcome out = run_graph_uncertainty(p);
        csv.field(std::string("seed"));
        csv.field(std::string("measure"));
        csv.field(std::string("auroc"));
        csv.field(std::string("aupr"));
        csv.endrow();
        for (int s = 0; s < p.n_seeds; ++s)
            for (int m = 0; m < 5; ++m) {
                csv.field(s);
                csv.field(std::string(kGraphMeasures[m]));
                csv.field(out.auroc(s, m));
                csv.field(out.aupr(s, m));
                csv.endrow();
            }
        nlohmann::json ja, jp;
        for (int m = 0; m < 5; ++m) {
            ja[kGraphMeasures[m]] = out.mean_auroc[m];
            jp[kGraphMeasures[m]] = out.mean_aupr[m];
        }
        summary["mean_auroc"] = ja;
        summary["mean_aupr"] = jp;
        summary["mean_accuracy"] = sum(out.accuracy) / std::max<size_t>(1, out.accuracy.size());
        if (task == "graph-ood")
            summary["trend_vacuity_ge_dissonance"] = out.mean_auroc[0] >= out.mean_auroc[1];
        else
            summary["trend_dissonance_ge_vacuity"] = out.mean_auroc[1] >= out.mean_auroc[0];
    } else if (task == "robust-ssl") {
        std::string kind_s = detail::take_s(cfg, "ood_kind", "faraway");
        TwoMoonsCompareParams p = two_moons_defaults(detail::parse_ood_kind(kind_s));
        p.base_seed = seed;
        p.n_seeds = static_cast<int>(detail::take_i(cfg, "n_seeds", p.n_seeds));
        std::string variant = detail::take_s(cfg, "variant", "both");
        p.run_baseline = variant == "both" || variant == "baseline";
        p.run_robust = variant == "both" || variant == "robust";
        resolve_moons_config(cfg, p.data);
        resolve_rssl_config(cfg, p.rssl);
        TwoMoonsOutcome out = run_two_moons_comparison(p);
        for (const char* h : {"seed", "variant", "epoch", "train_loss", "val_loss", "test_acc",
                              "mean_w_id", "mean_w_ood", "grad_norm_w"})
            csv.field(std::string(h));
        csv.endrow();
        for (const TwoMoonsRun& run : out.runs)
            for (const RsslLogRow& r : run.result.log) {
                csv.field(run.seed_index);
                csv.field(std::string(run.robust ? "robust" : "baseline"));
                csv.field(r.epoch);
                csv.field(r.train_loss);
                csv.field(r.val_loss);
                csv.field(r.test_acc);
                csv.field(r.mean_w_id);
                csv.field(r.mean_w_ood);
                csv.field(r.grad_norm_w);
                csv.endrow();
            }
        summary["mean_baseline_acc"] = out.mean_baseline;
        summary["mean_robust_acc"] = out.mean_robust;
        summary["baseline_acc"] = out.baseline_acc;
        summary["robust_acc"] = out.robust_acc;
        summary["mean_w_id"] = out.mean_w_id;
        summary["mean_w_ood"] = out.mean_w_ood;
    } else if (task == "early-detect") {
        EarlyDetectParams p = early_detect_defaults();
        p.base_seed = seed;
        resolve_early_detect_params(cfg, p);
        EarlyDetectOutcome out = run_early_detect(p);
        for (const char* h : {"head", "tp", "fp", "fn", "precision", "recall", "f1", "mean_delay"})
            csv.field(std::string(h));
        csv.endrow();
        const DetectionMetrics* heads[3] = {&out.wbc, &out.umss, &out.prob};
        const char* names[3] = {"wbc", "umss", "prob"};
        for (int i = 0; i < 3; ++i) {
            csv.field(std::string(names[i]));
            csv.field(heads[i]->tp);
            csv.field(heads[i]->fp);
            csv.field(heads[i]->fn);
            csv.field(heads[i]->precision);
            csv.field(heads[i]->recall);
            csv.field(heads[i]->f1);
            csv.field(heads[i]->mean_delay);
            csv.endrow();
        }
        summary["false_alarm_rate"] = out.false_alarm_rate;
        summary["cal_threshold"] = out.cal_threshold;
        summary["bench_threshold"] = out.bench_threshold;
        summary["wbc"] = detection_metrics_json(out.wbc);
        summary["umss"] = detection_metrics_json(out.umss);
        summary["prob"] = detection_metrics_json(out.prob);
        summary["trend_wbc_f1_ge_prob"] = out.wbc.f1 >= out.prob.f1;
        summary["trend_umss_delay_le_wbc"] = out.umss.mean_delay <= out.wbc.mean_delay;
    } else {
        throw std::runtime_error("unknown task: " + task);
    }

    write_text_file(out_dir + "/metrics.csv", csv.str());
    write_text_file(out_dir + "/summary.json", summary.dump(2) + "\n");
    write_text_file(out_dir + "/config.echo", cfg.echo());
    return 0;
}

}  // namespace uqkit
