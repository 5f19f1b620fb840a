#include "gem/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string_view>

#include "gem/checkpoint.hpp"
#include "gem/error.hpp"
#include "gem/heatmap.hpp"
#include "gem/rng.hpp"
#include "json.hpp"

namespace gem {

namespace fs = std::filesystem;

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
    Rng r = Rng::substream(seed, name);
    return r.engine()();
}

std::vector<std::vector<double>> blob_centers(std::size_t classes) {
    std::vector<std::vector<double>> centers;
    centers.reserve(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        const double a = 2.0 * 3.14159265358979323846 * static_cast<double>(c) /
                         static_cast<double>(classes);
        centers.push_back({2.0 * std::cos(a), 2.0 * std::sin(a)});
    }
    return centers;
}

}  // namespace

Dataset build_train_dataset(const DatasetSpec& spec, std::uint64_t seed) {
    if (spec.kind == "two_moons") {
        OodClusterSpec no_cluster;
        no_cluster.n = 0;  // training never sees real outliers
        return gen_two_moons(spec.n_train, spec.noise, no_cluster, seed);
    }
    if (spec.kind == "blobs")
        return gen_blobs(spec.blob_classes, spec.n_train / spec.blob_classes,
                         blob_centers(spec.blob_classes), spec.blob_sigma, seed);
    if (spec.kind == "toy1d") return gen_toy1d(seed);
    return load_idx(spec.idx_train_images, spec.idx_train_labels, spec.idx_limit);
}

EvalData build_eval_data(const DatasetSpec& spec, std::uint64_t seed) {
    EvalData ed;
    const std::uint64_t eseed = derive_seed(seed, "eval");
    if (spec.kind == "two_moons") {
        OodClusterSpec cluster{spec.ood_cx, spec.ood_cy, spec.ood_std, spec.ood_n};
        Dataset all = gen_two_moons(spec.n_test, spec.noise, cluster, eseed);
        ed.id_test = all.filter(Split::train).with_split(Split::test);
        ed.id_test.name = "moons_test";
        if (spec.ood_n > 0) {
            Dataset far = all.filter(Split::ood);
            far.name = "far_cluster";
            ed.ood_sets.emplace_back("far_cluster", std::move(far));
        }
        if (spec.ring_n > 0) {
            Dataset ring = gen_ring_ood(spec.ring_n, spec.ring_radius, spec.ring_noise,
                                        derive_seed(seed, "ring"));
            ring.name = "ring";
            ed.ood_sets.emplace_back("ring", std::move(ring));
        }
    } else if (spec.kind == "blobs") {
        ed.id_test = gen_blobs(spec.blob_classes, spec.n_test / spec.blob_classes,
                               blob_centers(spec.blob_classes), spec.blob_sigma, eseed)
                         .with_split(Split::test);
        ed.id_test.name = "blobs_test";
    } else if (spec.kind == "toy1d") {
        ed.id_test = gen_toy1d(eseed).with_split(Split::test);
        ed.id_test.name = "toy1d_test";
    } else {
        ed.id_test =
            load_idx(spec.idx_test_images, spec.idx_test_labels, spec.idx_limit)
                .with_split(Split::test);
        ed.id_test.name = "idx_test";
    }
    if (spec.shifted_severity > 0) {
        CorruptionSpec cs;
        cs.severity = spec.shifted_severity;
        ed.shifted = corrupt(ed.id_test, cs, derive_seed(seed, "shift"));
        ed.shifted.name = "shifted_s" + std::to_string(spec.shifted_severity);
    }
    return ed;
}

std::string read_git_hash() {
    fs::path dir = fs::current_path();
    for (int depth = 0; depth < 16; ++depth) {
        const fs::path head_path = dir / ".git" / "HEAD";
        std::error_code ec;
        if (fs::exists(head_path, ec)) {
            std::ifstream head(head_path);
            std::string line;
            std::getline(head, line);
            if (line.rfind("ref: ", 0) == 0) {
                const std::string ref = line.substr(5);
                std::ifstream rf(dir / ".git" / ref);
                if (rf) {
                    std::string h;
                    std::getline(rf, h);
                    if (!h.empty()) return h;
                }
                std::ifstream packed(dir / ".git" / "packed-refs");
                std::string pl;
                while (std::getline(packed, pl)) {
                    if (pl.size() > 41 && pl[40] == ' ' && pl.substr(41) == ref)
                        return pl.substr(0, 40);
                }
                return "unknown";
            }
            return line.empty() ? "unknown" : line;
        }
        if (!dir.has_parent_path() || dir.parent_path() == dir) break;
        dir = dir.parent_path();
    }
    return "unknown";
}

std::string seed_dir(const std::string& out_dir, std::uint64_t seed) {
    return out_dir + "/seed" + std::to_string(seed);
}

TrainOutcome run_train_seed(const RunConfig& cfg, std::uint64_t seed,
                            const std::string& config_text) {
    const std::string dir = seed_dir(cfg.out_dir, seed);
    fs::create_directories(dir);
    {
        std::ofstream echo(fs::path(cfg.out_dir) / "config.json", std::ios::binary);
        if (!echo) throw std::runtime_error("cannot write config echo under " + cfg.out_dir);
        echo << config_text;
    }

    const auto t0 = std::chrono::steady_clock::now();
    Dataset train = build_train_dataset(cfg.dataset, seed);
    GemModel model(cfg.gem, seed);
    TrainResult res = fit(model, train, cfg.schedule, seed);
    write_history_csv(dir + "/history.csv", res.history);
    save_checkpoint(model, dir + "/checkpoint.json", seed, cfg.schedule.epochs);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (cfg.schedule.epochs == 0)
        std::cerr << "warning: epochs=0, checkpoint holds an untrained model ("
                  << dir + "/checkpoint.json" << ")\n";

    nlohmann::json manifest;
    manifest["command"] = "train";
    manifest["seed"] = seed;
    manifest["git_hash"] = read_git_hash();
    manifest["wall_seconds"] = wall;
    manifest["dataset"] = train.name;
    manifest["variant"] = variant_name(cfg.gem.variant);
    manifest["epochs"] = cfg.schedule.epochs;
    manifest["untrained"] = cfg.schedule.epochs == 0;
    manifest["skipped_steps"] = res.skipped_steps;
    manifest["final_train_acc"] = res.final_train_acc;
    manifest["config_echo"] = "../config.json";
    std::ofstream mf(dir + "/manifest.json");
    if (!mf) throw std::runtime_error("cannot write manifest under " + dir);
    mf << manifest.dump(1) << "\n";

    return {std::move(res), dir + "/checkpoint.json"};
}

namespace {

struct SetScores {
    UncertaintyScores u;
    std::vector<double> alpha0;
    std::vector<double> energy_conf;
    Tensor p_hat;
};

SetScores score_set(GemModel& model, const Dataset& d) {
    TapePause pause;
    ForwardResult f = model.forward(d.X, /*training=*/false, nullptr, nullptr);
    UncertaintyInputs in;
    in.p_hat = f.p_hat;
    in.alpha0 = {f.alpha0_mix.data().begin(), f.alpha0_mix.data().end()};
    if (f.head_p.size() > 1) {
        in.pi = f.pi;
        in.head_p = f.head_p;
    }
    in.energy_conf = model.energy_confidence_eval(f);
    SetScores s;
    s.u = uncertainty_scores(in);
    s.alpha0 = std::move(in.alpha0);
    s.energy_conf = in.energy_conf;
    s.p_hat = f.p_hat;
    return s;
}

void dump_set(std::ofstream& out, const std::string& set_name, bool is_ood,
              const SetScores& s, const std::vector<int>& labels) {
    char buf[256];
    for (std::size_t i = 0; i < s.alpha0.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s,%zu,%d,%d,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                      set_name.c_str(), i, labels[i], is_ood ? 1 : 0, -s.u.neg_maxp[i],
                      s.u.entropy[i], s.alpha0[i], s.u.mi[i], s.energy_conf[i]);
        out << buf;
    }
}

ScoredEvalSet pair_scores(const std::vector<double>& id_scores,
                          const std::vector<double>& ood_scores) {
    ScoredEvalSet s;
    s.scores = id_scores;
    s.scores.insert(s.scores.end(), ood_scores.begin(), ood_scores.end());
    s.positives.assign(id_scores.size(), 0);
    s.positives.insert(s.positives.end(), ood_scores.size(), 1);
    return s;
}

}  // namespace

std::vector<MetricRow> run_eval_seed(const RunConfig& cfg, std::uint64_t seed) {
    const std::string dir = seed_dir(cfg.out_dir, seed);
    LoadedCheckpoint lc = load_checkpoint(dir + "/checkpoint.json");
    GemModel& model = lc.model;
    const std::string variant = variant_name(model.config().variant);
    const bool multi_head = model.config().effective_heads() > 1;

    EvalData ed = build_eval_data(cfg.dataset, seed);
    std::vector<MetricRow> rows;
    auto push = [&rows, &variant, seed](const std::string& ds, const std::string& metric,
                                        double value) {
        rows.push_back({ds, variant, seed, metric, value});
    };

    std::ofstream scores_out(dir + "/scores.csv");
    if (!scores_out) throw std::runtime_error("cannot write scores.csv under " + dir);
    scores_out << "set,row,label,is_ood,maxp,entropy,alpha0,mi,energy_conf\n";

    SetScores sid = score_set(model, ed.id_test);
    dump_set(scores_out, ed.id_test.name, false, sid, ed.id_test.y);

    CalibrationReport rep = calibration_report(sid.p_hat, ed.id_test.y, 15);
    push(ed.id_test.name, "accuracy", rep.accuracy);
    push(ed.id_test.name, "ece", rep.ece);
    push(ed.id_test.name, "brier", rep.brier);
    push(ed.id_test.name, "brier_x100", rep.brier_x100);
    push(ed.id_test.name, "nll", rep.nll);
    ScoredEvalSet mis = misclassification_set(sid.p_hat, ed.id_test.y);
    const long n_correct = std::count(mis.positives.begin(), mis.positives.end(), 1);
    if (n_correct > 0 && n_correct < static_cast<long>(mis.positives.size())) {
        push(ed.id_test.name, "auroc_correct_maxp", auroc(mis));
        push(ed.id_test.name, "aupr_correct_maxp", aupr(mis));
    }  // all-correct (or all-wrong) test sets have no ranking task to score
    if (sid.u.mi_is_zero_single_head) push(ed.id_test.name, "mi_degenerate", 1.0);

    if (ed.ood_sets.empty()) push("none", "ood_skipped", 1.0);
    for (const auto& [ood_name, ood] : ed.ood_sets) {
        SetScores so = score_set(model, ood);
        dump_set(scores_out, ood_name, true, so, ood.y);
        struct Named {
            const char* tag;
            const std::vector<double>* id;
            const std::vector<double>* ood;
        };
        const Named scored[] = {
            {"maxp", &sid.u.neg_maxp, &so.u.neg_maxp},
            {"entropy", &sid.u.entropy, &so.u.entropy},
            {"alpha0", &sid.u.neg_alpha0, &so.u.neg_alpha0},
            {"mi", &sid.u.mi, &so.u.mi},
            {"energy", &sid.u.neg_energy_conf, &so.u.neg_energy_conf},
            {"aleatoric", &sid.u.neg_maxp, &so.u.neg_maxp},
            {"epistemic", multi_head ? &sid.u.mi : &sid.u.neg_alpha0,
             multi_head ? &so.u.mi : &so.u.neg_alpha0},
        };
        for (const Named& n : scored) {
            ScoredEvalSet s = pair_scores(*n.id, *n.ood);
            push(ood_name, std::string("auroc_") + n.tag, auroc(s));
            push(ood_name, std::string("aupr_") + n.tag, aupr(s));
        }
    }

    if (ed.shifted.X.defined()) {
        SetScores ss = score_set(model, ed.shifted);
        dump_set(scores_out, ed.shifted.name, false, ss, ed.shifted.y);
        CalibrationReport srep = calibration_report(ss.p_hat, ed.shifted.y, 15);
        push(ed.shifted.name, "accuracy", srep.accuracy);
        push(ed.shifted.name, "ece", srep.ece);
        push(ed.shifted.name, "nll", srep.nll);
    }

    // Temperature fit on the validation carve-out of the training corpus.
    Dataset train = build_train_dataset(cfg.dataset, seed);
    retag_validation(train, cfg.schedule.val_fraction, seed);
    Dataset val = train.filter(Split::val);
    if (val.size() > 0) {
        TapePause pause;
        ForwardResult fv = model.forward(val.X, /*training=*/false, nullptr, nullptr);
        Tensor logits(val.size(), model.config().classes);
        for (std::size_t i = 0; i < logits.rows(); ++i)
            for (std::size_t j = 0; j < logits.cols(); ++j)
                logits.at(i, j) = std::log(std::max(fv.p_mix.at(i, j), 1e-12));
        TemperatureFit tf = fit_temperature(logits, val.y);
        push("val", "temperature", tf.temperature);
        push("val", "nll_before", tf.nll_before);
        push("val", "nll_after", tf.nll_after);
    }

    write_metric_csv(dir + "/metrics.csv", rows);
    return rows;
}

int cmd_train(const RunConfig& cfg, const std::string& config_text) {
    for (std::uint64_t seed : cfg.seeds) {
        TrainOutcome out = run_train_seed(cfg, seed, config_text);
        std::cout << "trained seed " << seed << ": final train accuracy "
                  << out.result.final_train_acc << ", checkpoint " << out.checkpoint_path
                  << "\n";
    }
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    std::vector<MetricRow> all;
    for (std::uint64_t seed : cfg.seeds) {
        std::vector<MetricRow> rows = run_eval_seed(cfg, seed);
        all.insert(all.end(), rows.begin(), rows.end());
        std::cout << "evaluated seed " << seed << ": " << rows.size() << " metric rows\n";
    }
    write_metric_csv(cfg.out_dir + "/metrics.csv", all);
    std::cout << "wrote " << cfg.out_dir + "/metrics.csv" << "\n";
    return 0;
}

int cmd_heatmap(const RunConfig& cfg) {
    for (std::uint64_t seed : cfg.seeds) {
        const std::string dir = seed_dir(cfg.out_dir, seed);
        LoadedCheckpoint lc = load_checkpoint(dir + "/checkpoint.json");
        HeatmapGrid grid = compute_heatmap(lc.model, cfg.heatmap);
        Dataset overlay = build_train_dataset(cfg.dataset, seed);
        const std::string stem = dir + "/heatmap_" + cfg.heatmap.score;
        write_grid_csv(grid, stem + ".csv");
        write_heatmap_svg(grid, &overlay, stem + ".svg");
        std::cout << "wrote " << stem << ".svg\n";
    }
    return 0;
}

std::vector<SweepCell> ablation_ladder() {
    std::vector<SweepCell> cells(9);
    cells[0].name = "none";
    cells[1].name = "sn";
    cells[2].name = "core";
    cells[3].name = "mix";
    cells[4].name = "fi_reg";
    cells[5].name = "fi_mod";
    cells[6].name = "fi_both";
    cells[7].name = "ebm";
    cells[8].name = "full";
    for (std::size_t i = 1; i < 9; ++i) cells[i].sn = true;
    for (std::size_t i = 2; i < 9; ++i) cells[i].core = true;
    for (std::size_t i = 3; i < 9; ++i) cells[i].mix = true;
    cells[4].fi_reg = true;
    cells[5].fi_mod = true;
    for (std::size_t i = 6; i < 9; ++i) {
        cells[i].fi_reg = true;
        cells[i].fi_mod = true;
    }
    cells[7].ebm = true;
    cells[8].ebm = true;
    cells[8].unc = true;
    return cells;
}

std::vector<SweepCell> cross_product_cells(const std::vector<std::string>& axes) {
    std::vector<SweepCell> cells;
    const std::size_t count = std::size_t{1} << axes.size();
    for (std::size_t mask = 0; mask < count; ++mask) {
        SweepCell cell;
        std::string name;
        for (std::size_t i = 0; i < axes.size(); ++i) {
            if (!(mask & (std::size_t{1} << i))) continue;
            const std::string& a = axes[i];
            if (a == "sn") cell.sn = true;
            else if (a == "core") cell.core = true;
            else if (a == "mix") cell.mix = true;
            else if (a == "fi_reg") cell.fi_reg = true;
            else if (a == "fi_mod") cell.fi_mod = true;
            else if (a == "ebm") cell.ebm = true;
            else if (a == "unc") cell.unc = true;
            else throw std::invalid_argument("cross_product_cells: unknown axis " + a);
            name += name.empty() ? a : "+" + a;
        }
        cell.name = name.empty() ? "none" : name;
        cells.push_back(std::move(cell));
    }
    return cells;
}

GemConfig apply_cell(GemConfig base, const SweepCell& cell) {
    base.sn = cell.sn;
    base.fi_reg = cell.fi_reg;
    base.fi_mod = cell.fi_mod;
    base.ebm = cell.ebm;
    base.unc = cell.unc;
    base.vos = cell.ebm;
    const bool fi_on = cell.fi_reg || cell.fi_mod;
    const bool mix_on = cell.mix || fi_on;
    const bool core_on = cell.core || mix_on || cell.ebm || cell.unc;
    base.variant = fi_on    ? Variant::fi
                   : mix_on  ? Variant::mix
                   : core_on ? Variant::core
                             : Variant::edl_baseline;
    base.validate();
    return base;
}

namespace {

double find_metric(const std::vector<MetricRow>& rows, const std::string& metric,
                   bool* found) {
    for (const MetricRow& r : rows) {
        if (r.metric == metric) {
            *found = true;
            return r.value;
        }
    }
    *found = false;
    return 0.0;
}

void append_cell_value(std::string& line, const std::vector<MetricRow>& rows,
                       const std::string& metric) {
    bool found = false;
    const double v = find_metric(rows, metric, &found);
    char buf[64];
    if (found) {
        std::snprintf(buf, sizeof buf, ",%.12g", v);
        line += buf;
    } else {
        line += ",";
    }
}

}  // namespace

int cmd_sweep(const RunConfig& cfg, const std::string& config_text) {
    std::vector<SweepCell> cells = cfg.sweep.preset == "ablation9"
                                       ? ablation_ladder()
                                       : cross_product_cells(cfg.sweep.axes);
    fs::create_directories(cfg.out_dir);
    std::ofstream sweep_csv(cfg.out_dir + "/sweep.csv");
    if (!sweep_csv) throw std::runtime_error("cannot write sweep.csv under " + cfg.out_dir);
    sweep_csv << "cell,seed,sn,core,mix,fi_reg,fi_mod,ebm,unc,variant,test_acc,ece,nll,"
                 "auroc_entropy,aupr_epistemic\n";

    for (const SweepCell& cell : cells) {
        RunConfig sub = cfg;
        sub.gem = apply_cell(cfg.gem, cell);
        sub.out_dir = cfg.out_dir + "/" + cell.name;
        for (std::uint64_t seed : cfg.seeds) {
            run_train_seed(sub, seed, config_text);
            std::vector<MetricRow> rows = run_eval_seed(sub, seed);
            std::string line = cell.name + "," + std::to_string(seed);
            for (bool flag : {cell.sn, cell.core, cell.mix, cell.fi_reg, cell.fi_mod, cell.ebm,
                              cell.unc})
                line += flag ? ",1" : ",0";
            line += "," + variant_name(sub.gem.variant);
            append_cell_value(line, rows, "accuracy");
            append_cell_value(line, rows, "ece");
            append_cell_value(line, rows, "nll");
            append_cell_value(line, rows, "auroc_entropy");
            append_cell_value(line, rows, "aupr_epistemic");
            sweep_csv << line << "\n";
            std::cout << "sweep cell " << cell.name << " seed " << seed << " done\n";
        }
    }
    if (!sweep_csv) throw std::runtime_error("sweep.csv write failed");
    std::cout << "wrote " << cfg.out_dir + "/sweep.csv" << "\n";
    return 0;
}

}  // namespace gem
