#include "gem/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include "gem/error.hpp"
#include "json.hpp"

namespace gem {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

void require_object(const json& v, const std::string& path) {
    if (!v.is_object()) fail("\"" + path + "\" must be a JSON object");
}

void require_keys(const json& obj, const std::string& prefix,
                  std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) {
            if (it.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) fail("unknown key \"" + prefix + it.key() + "\"");
    }
}

double get_num(const json& o, const char* key, const std::string& prefix, double dflt) {
    auto it = o.find(key);
    if (it == o.end()) return dflt;
    if (!it->is_number()) fail("\"" + prefix + key + "\" must be a number");
    return it->get<double>();
}

std::size_t get_size(const json& o, const char* key, const std::string& prefix,
                     std::size_t dflt) {
    auto it = o.find(key);
    if (it == o.end()) return dflt;
    if (!it->is_number_integer() || it->get<long long>() < 0)
        fail("\"" + prefix + key + "\" must be a non-negative integer");
    return static_cast<std::size_t>(it->get<long long>());
}

int get_int(const json& o, const char* key, const std::string& prefix, int dflt) {
    auto it = o.find(key);
    if (it == o.end()) return dflt;
    if (!it->is_number_integer()) fail("\"" + prefix + key + "\" must be an integer");
    return static_cast<int>(it->get<long long>());
}

bool get_bool(const json& o, const char* key, const std::string& prefix, bool dflt) {
    auto it = o.find(key);
    if (it == o.end()) return dflt;
    if (!it->is_boolean()) fail("\"" + prefix + key + "\" must be a boolean");
    return it->get<bool>();
}

std::string get_str(const json& o, const char* key, const std::string& prefix,
                    const std::string& dflt) {
    auto it = o.find(key);
    if (it == o.end()) return dflt;
    if (!it->is_string()) fail("\"" + prefix + key + "\" must be a string");
    return it->get<std::string>();
}

GemConfig parse_gem(const json& o, const std::string& prefix, GemConfig g) {
    require_keys(o, prefix,
                 {"variant",       "input_dim",      "classes",
                  "feat_dim",      "backbone_hidden", "aux_hidden",
                  "activation",    "heads",          "tau",
                  "eps",           "eps_prime",      "gamma",
                  "s_min",         "s_max",          "temperature",
                  "lambda_kl",     "lambda_fi",      "lambda_ebm",
                  "lambda_unc",    "beta_id",        "beta_ood",
                  "beta_trace",    "dropout",        "component_dropout",
                  "lambda_min",    "gmm_components", "sn",
                  "fi_reg",        "fi_mod",         "ebm",
                  "unc",           "vos",            "tanh_energy",
                  "vos_weight",    "vos_warmup_epochs", "vos_margin",
                  "vos_tail_quantile", "vos_per_class", "vos_expansion"});
    if (auto it = o.find("variant"); it != o.end()) {
        if (!it->is_string()) fail("\"" + prefix + "variant\" must be a string");
        try {
            g.variant = variant_from_name(it->get<std::string>());
        } catch (const std::invalid_argument& e) {
            fail("\"" + prefix + "variant\": " + e.what());
        }
    }
    g.input_dim = get_size(o, "input_dim", prefix, g.input_dim);
    g.classes = get_size(o, "classes", prefix, g.classes);
    g.feat_dim = get_size(o, "feat_dim", prefix, g.feat_dim);
    if (auto it = o.find("backbone_hidden"); it != o.end()) {
        if (!it->is_array()) fail("\"" + prefix + "backbone_hidden\" must be an array");
        g.backbone_hidden.clear();
        for (const json& v : *it) {
            if (!v.is_number_integer() || v.get<long long>() < 1)
                fail("\"" + prefix + "backbone_hidden\" entries must be positive integers");
            g.backbone_hidden.push_back(static_cast<std::size_t>(v.get<long long>()));
        }
    }
    g.aux_hidden = get_size(o, "aux_hidden", prefix, g.aux_hidden);
    if (auto it = o.find("activation"); it != o.end()) {
        const std::string a = get_str(o, "activation", prefix, "tanh");
        if (a == "tanh")
            g.activation = Activation::tanh;
        else if (a == "relu")
            g.activation = Activation::relu;
        else
            fail("\"" + prefix + "activation\" must be \"tanh\" or \"relu\"");
    }
    g.heads = get_size(o, "heads", prefix, g.heads);
    g.tau = get_num(o, "tau", prefix, g.tau);
    g.eps = get_num(o, "eps", prefix, g.eps);
    g.eps_prime = get_num(o, "eps_prime", prefix, g.eps_prime);
    g.gamma = get_num(o, "gamma", prefix, g.gamma);
    g.s_min = get_num(o, "s_min", prefix, g.s_min);
    g.s_max = get_num(o, "s_max", prefix, g.s_max);
    g.temperature = get_num(o, "temperature", prefix, g.temperature);
    g.lambda_kl = get_num(o, "lambda_kl", prefix, g.lambda_kl);
    g.lambda_fi = get_num(o, "lambda_fi", prefix, g.lambda_fi);
    g.lambda_ebm = get_num(o, "lambda_ebm", prefix, g.lambda_ebm);
    g.lambda_unc = get_num(o, "lambda_unc", prefix, g.lambda_unc);
    g.beta_id = get_num(o, "beta_id", prefix, g.beta_id);
    g.beta_ood = get_num(o, "beta_ood", prefix, g.beta_ood);
    g.beta_trace = get_num(o, "beta_trace", prefix, g.beta_trace);
    g.dropout = get_num(o, "dropout", prefix, g.dropout);
    g.component_dropout = get_num(o, "component_dropout", prefix, g.component_dropout);
    g.lambda_min = get_num(o, "lambda_min", prefix, g.lambda_min);
    g.gmm_components = get_size(o, "gmm_components", prefix, g.gmm_components);
    g.sn = get_bool(o, "sn", prefix, g.sn);
    g.fi_reg = get_bool(o, "fi_reg", prefix, g.fi_reg);
    g.fi_mod = get_bool(o, "fi_mod", prefix, g.fi_mod);
    g.ebm = get_bool(o, "ebm", prefix, g.ebm);
    g.unc = get_bool(o, "unc", prefix, g.unc);
    g.vos = get_bool(o, "vos", prefix, g.vos);
    g.tanh_energy = get_bool(o, "tanh_energy", prefix, g.tanh_energy);
    g.vos_params.weight = get_num(o, "vos_weight", prefix, g.vos_params.weight);
    g.vos_params.warmup_epochs = get_size(o, "vos_warmup_epochs", prefix,
                                          g.vos_params.warmup_epochs);
    g.vos_params.margin = get_num(o, "vos_margin", prefix, g.vos_params.margin);
    g.vos_params.tail_quantile = get_num(o, "vos_tail_quantile", prefix,
                                         g.vos_params.tail_quantile);
    g.vos_params.per_class = get_size(o, "vos_per_class", prefix, g.vos_params.per_class);
    g.vos_params.expansion = get_num(o, "vos_expansion", prefix, g.vos_params.expansion);
    try {
        g.validate();
    } catch (const std::invalid_argument& e) {
        fail("\"" + prefix.substr(0, prefix.empty() ? 0 : prefix.size() - 1) + "\": " +
             e.what());
    }
    return g;
}

TrainSchedule parse_schedule(const json& o, const std::string& prefix, TrainSchedule s) {
    require_keys(o, prefix,
                 {"epochs", "batch_size", "base_lr", "weight_decay", "clip_norm",
                  "density_refit_every", "val_fraction"});
    s.epochs = get_size(o, "epochs", prefix, s.epochs);
    s.batch_size = get_size(o, "batch_size", prefix, s.batch_size);
    s.base_lr = get_num(o, "base_lr", prefix, s.base_lr);
    s.weight_decay = get_num(o, "weight_decay", prefix, s.weight_decay);
    s.clip_norm = get_num(o, "clip_norm", prefix, s.clip_norm);
    s.density_refit_every = get_size(o, "density_refit_every", prefix, s.density_refit_every);
    s.val_fraction = get_num(o, "val_fraction", prefix, s.val_fraction);
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        fail(std::string("\"schedule\": ") + e.what());
    }
    return s;
}

DatasetSpec parse_dataset(const json& o, const std::string& prefix, DatasetSpec d) {
    require_keys(o, prefix,
                 {"kind", "n_train", "n_test", "noise", "ood_n", "ood_cx", "ood_cy", "ood_std",
                  "ring_n", "ring_radius", "ring_noise", "shifted_severity", "blob_classes",
                  "blob_sigma", "idx_train_images", "idx_train_labels", "idx_test_images",
                  "idx_test_labels", "idx_limit"});
    d.kind = get_str(o, "kind", prefix, d.kind);
    d.n_train = get_size(o, "n_train", prefix, d.n_train);
    d.n_test = get_size(o, "n_test", prefix, d.n_test);
    d.noise = get_num(o, "noise", prefix, d.noise);
    d.ood_n = get_size(o, "ood_n", prefix, d.ood_n);
    d.ood_cx = get_num(o, "ood_cx", prefix, d.ood_cx);
    d.ood_cy = get_num(o, "ood_cy", prefix, d.ood_cy);
    d.ood_std = get_num(o, "ood_std", prefix, d.ood_std);
    d.ring_n = get_size(o, "ring_n", prefix, d.ring_n);
    d.ring_radius = get_num(o, "ring_radius", prefix, d.ring_radius);
    d.ring_noise = get_num(o, "ring_noise", prefix, d.ring_noise);
    d.shifted_severity = get_int(o, "shifted_severity", prefix, d.shifted_severity);
    d.blob_classes = get_size(o, "blob_classes", prefix, d.blob_classes);
    d.blob_sigma = get_num(o, "blob_sigma", prefix, d.blob_sigma);
    d.idx_train_images = get_str(o, "idx_train_images", prefix, d.idx_train_images);
    d.idx_train_labels = get_str(o, "idx_train_labels", prefix, d.idx_train_labels);
    d.idx_test_images = get_str(o, "idx_test_images", prefix, d.idx_test_images);
    d.idx_test_labels = get_str(o, "idx_test_labels", prefix, d.idx_test_labels);
    d.idx_limit = get_size(o, "idx_limit", prefix, d.idx_limit);
    d.validate();
    return d;
}

SweepSpec parse_sweep(const json& o, const std::string& prefix, SweepSpec s) {
    require_keys(o, prefix, {"preset", "axes"});
    s.preset = get_str(o, "preset", prefix, s.preset);
    if (!s.preset.empty() && s.preset != "ablation9")
        fail("\"" + prefix + "preset\" must be \"ablation9\" or absent");
    if (auto it = o.find("axes"); it != o.end()) {
        if (!it->is_array()) fail("\"" + prefix + "axes\" must be an array");
        s.axes.clear();
        for (const json& v : *it) {
            if (!v.is_string()) fail("\"" + prefix + "axes\" entries must be strings");
            const std::string a = v.get<std::string>();
            static const char* known[] = {"sn", "core", "mix", "fi_reg", "fi_mod", "ebm", "unc"};
            bool ok = false;
            for (const char* k : known) ok = ok || a == k;
            if (!ok) fail("\"" + prefix + "axes\": unknown axis \"" + a + "\"");
            for (const std::string& prev : s.axes)
                if (prev == a) fail("\"" + prefix + "axes\": duplicate axis \"" + a + "\"");
            s.axes.push_back(a);
        }
    }
    return s;
}

HeatmapSpec parse_heatmap(const json& o, const std::string& prefix, HeatmapSpec h) {
    require_keys(o, prefix, {"score", "x_min", "x_max", "y_min", "y_max", "resolution"});
    h.score = get_str(o, "score", prefix, h.score);
    h.x_min = get_num(o, "x_min", prefix, h.x_min);
    h.x_max = get_num(o, "x_max", prefix, h.x_max);
    h.y_min = get_num(o, "y_min", prefix, h.y_min);
    h.y_max = get_num(o, "y_max", prefix, h.y_max);
    h.resolution = get_size(o, "resolution", prefix, h.resolution);
    try {
        h.validate();
    } catch (const std::invalid_argument& e) {
        fail(std::string("\"heatmap\": ") + e.what());
    }
    return h;
}

}  // namespace

std::size_t DatasetSpec::input_dim() const {
    if (kind == "toy1d") return 1;
    if (kind == "idx") return 784;
    return 2;
}

std::size_t DatasetSpec::class_count() const {
    if (kind == "blobs") return blob_classes;
    if (kind == "idx") return 10;
    return 2;
}

void DatasetSpec::validate() const {
    if (kind != "two_moons" && kind != "blobs" && kind != "toy1d" && kind != "idx")
        fail("\"dataset.kind\" must be one of two_moons, blobs, toy1d, idx");
    if (!(noise >= 0.0)) fail("\"dataset.noise\" must be non-negative");
    if (kind == "two_moons") {
        if (n_train < 4 || n_train % 2 != 0)
            fail("\"dataset.n_train\" must be even and at least 4 for two_moons");
        if (n_test < 4 || n_test % 2 != 0)
            fail("\"dataset.n_test\" must be even and at least 4 for two_moons");
        if (!(ood_std > 0.0)) fail("\"dataset.ood_std\" must be positive");
    }
    if (ring_n > 0 && kind != "two_moons")
        fail("\"dataset.ring_n\" is only supported for two_moons");
    if (ring_n > 0 && !(ring_radius > 0.0)) fail("\"dataset.ring_radius\" must be positive");
    if (shifted_severity < 0 || shifted_severity > 5)
        fail("\"dataset.shifted_severity\" must lie in 0..5");
    if (kind == "blobs") {
        if (blob_classes < 2) fail("\"dataset.blob_classes\" must be at least 2");
        if (!(blob_sigma > 0.0)) fail("\"dataset.blob_sigma\" must be positive");
        if (n_train < blob_classes || n_test < blob_classes)
            fail("\"dataset.n_train\"/\"n_test\" must cover every blob class");
    }
    if (kind == "idx") {
        if (idx_train_images.empty() || idx_train_labels.empty() || idx_test_images.empty() ||
            idx_test_labels.empty())
            fail("\"dataset\": idx kind needs all four idx_* paths");
    }
}

RunConfig parse_run_config_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(std::string("config is not valid JSON: ") + e.what());
    }
    require_object(doc, "<root>");
    require_keys(doc, "", {"gem", "schedule", "dataset", "seeds", "out_dir", "sweep", "heatmap"});

    RunConfig rc;
    if (auto it = doc.find("dataset"); it != doc.end()) {
        require_object(*it, "dataset");
        rc.dataset = parse_dataset(*it, "dataset.", rc.dataset);
    } else {
        rc.dataset.validate();
    }

    // Model shape follows the data unless pinned explicitly.
    rc.gem.input_dim = rc.dataset.input_dim();
    rc.gem.classes = rc.dataset.class_count();
    if (auto it = doc.find("gem"); it != doc.end()) {
        require_object(*it, "gem");
        rc.gem = parse_gem(*it, "gem.", rc.gem);
    }
    if (rc.gem.input_dim != rc.dataset.input_dim())
        fail("\"gem.input_dim\" (" + std::to_string(rc.gem.input_dim) +
             ") does not match the dataset (" + std::to_string(rc.dataset.input_dim()) + ")");
    if (rc.gem.classes != rc.dataset.class_count())
        fail("\"gem.classes\" (" + std::to_string(rc.gem.classes) +
             ") does not match the dataset (" + std::to_string(rc.dataset.class_count()) + ")");

    if (auto it = doc.find("schedule"); it != doc.end()) {
        require_object(*it, "schedule");
        rc.schedule = parse_schedule(*it, "schedule.", rc.schedule);
    }
    if (auto it = doc.find("seeds"); it != doc.end()) {
        if (!it->is_array() || it->empty()) fail("\"seeds\" must be a non-empty array");
        rc.seeds.clear();
        for (const json& v : *it) {
            if (!v.is_number_integer() || v.get<long long>() < 0)
                fail("\"seeds\" entries must be non-negative integers");
            rc.seeds.push_back(static_cast<std::uint64_t>(v.get<long long>()));
        }
    }
    rc.out_dir = get_str(doc, "out_dir", "", rc.out_dir);
    if (rc.out_dir.empty()) fail("\"out_dir\" must not be empty");
    if (auto it = doc.find("sweep"); it != doc.end()) {
        require_object(*it, "sweep");
        rc.sweep = parse_sweep(*it, "sweep.", rc.sweep);
    }
    if (auto it = doc.find("heatmap"); it != doc.end()) {
        require_object(*it, "heatmap");
        rc.heatmap = parse_heatmap(*it, "heatmap.", rc.heatmap);
    }
    return rc;
}

RunConfig parse_run_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot read config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config_text(ss.str());
}

std::string gem_config_to_json_text(const GemConfig& cfg) {
    json o;
    o["variant"] = variant_name(cfg.variant);
    o["input_dim"] = cfg.input_dim;
    o["classes"] = cfg.classes;
    o["feat_dim"] = cfg.feat_dim;
    o["backbone_hidden"] = cfg.backbone_hidden;
    o["aux_hidden"] = cfg.aux_hidden;
    o["activation"] = cfg.activation == Activation::tanh ? "tanh" : "relu";
    o["heads"] = cfg.heads;
    o["tau"] = cfg.tau;
    o["eps"] = cfg.eps;
    o["eps_prime"] = cfg.eps_prime;
    o["gamma"] = cfg.gamma;
    o["s_min"] = cfg.s_min;
    o["s_max"] = cfg.s_max;
    o["temperature"] = cfg.temperature;
    o["lambda_kl"] = cfg.lambda_kl;
    o["lambda_fi"] = cfg.lambda_fi;
    o["lambda_ebm"] = cfg.lambda_ebm;
    o["lambda_unc"] = cfg.lambda_unc;
    o["beta_id"] = cfg.beta_id;
    o["beta_ood"] = cfg.beta_ood;
    o["beta_trace"] = cfg.beta_trace;
    o["dropout"] = cfg.dropout;
    o["component_dropout"] = cfg.component_dropout;
    o["lambda_min"] = cfg.lambda_min;
    o["gmm_components"] = cfg.gmm_components;
    o["sn"] = cfg.sn;
    o["fi_reg"] = cfg.fi_reg;
    o["fi_mod"] = cfg.fi_mod;
    o["ebm"] = cfg.ebm;
    o["unc"] = cfg.unc;
    o["vos"] = cfg.vos;
    o["tanh_energy"] = cfg.tanh_energy;
    o["vos_weight"] = cfg.vos_params.weight;
    o["vos_warmup_epochs"] = cfg.vos_params.warmup_epochs;
    o["vos_margin"] = cfg.vos_params.margin;
    o["vos_tail_quantile"] = cfg.vos_params.tail_quantile;
    o["vos_per_class"] = cfg.vos_params.per_class;
    o["vos_expansion"] = cfg.vos_params.expansion;
    return o.dump(2);
}

GemConfig gem_config_from_json_text(const std::string& text) {
    json o;
    try {
        o = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(std::string("model config is not valid JSON: ") + e.what());
    }
    require_object(o, "gem");
    return parse_gem(o, "gem.", GemConfig{});
}

}  // namespace gem
