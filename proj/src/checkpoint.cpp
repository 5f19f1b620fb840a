#include "gem/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gem/config.hpp"
#include "gem/error.hpp"
#include "json.hpp"

namespace gem {

namespace {

using nlohmann::json;

std::vector<std::pair<std::string, LinearLayer*>> named_layers(GemModel& m) {
    std::vector<std::pair<std::string, LinearLayer*>> out;
    auto add = [&out](const std::string& base, Mlp& mlp) {
        for (std::size_t i = 0; i < mlp.layers.size(); ++i)
            out.emplace_back(base + "." + std::to_string(i), &mlp.layers[i]);
    };
    add("backbone", m.backbone);
    for (std::size_t k = 0; k < m.head_set.heads.size(); ++k)
        add("head" + std::to_string(k), m.head_set.heads[k]);
    if (m.energy_head) add("energy", m.energy_head->mlp);
    if (m.gate) add("gate", m.gate->mlp);
    if (m.router) add("router", m.router->mlp);
    return out;
}

json calib_to_json(const std::optional<DensityCalibration>& c) {
    if (!c) return nullptr;
    return json{{"q01", c->q01}, {"q99", c->q99}};
}

std::optional<DensityCalibration> calib_from_json(const json& v, const std::string& what) {
    if (v.is_null()) return std::nullopt;
    if (!v.is_object() || !v.contains("q01") || !v.contains("q99"))
        throw FormatError("checkpoint: malformed calibration block " + what);
    DensityCalibration c;
    c.q01 = v.at("q01").get<double>();
    c.q99 = v.at("q99").get<double>();
    return c;
}

}  // namespace

void save_checkpoint(GemModel& model, const std::string& path, std::uint64_t seed,
                     std::size_t trained_epochs) {
    json doc;
    doc["format_version"] = kCheckpointVersion;
    doc["seed"] = seed;
    doc["trained_epochs"] = trained_epochs;
    doc["gem"] = json::parse(gem_config_to_json_text(model.config()));

    json layers = json::array();
    for (auto& [name, layer] : named_layers(model)) {
        json l;
        l["name"] = name;
        l["in"] = layer->in_dim();
        l["out"] = layer->out_dim();
        l["w"] = layer->W.data();
        l["b"] = layer->b.data();
        l["sn"] = layer->sn_enabled;
        l["sn_warned"] = layer->sn_warned;
        l["sn_u"] = layer->sn_u;
        l["sn_v"] = layer->sn_v;
        layers.push_back(std::move(l));
    }
    doc["layers"] = std::move(layers);

    if (model.gmm && model.gmm->fitted) {
        const GmmModel& g = *model.gmm;
        doc["gmm"] = json{{"components", g.n_components}, {"dim", g.dim},
                          {"full_cov", g.full_cov},       {"weights", g.weights},
                          {"means", g.means},             {"covs", g.covs},
                          {"reseed_events", g.reseed_events}};
    } else {
        doc["gmm"] = nullptr;
    }
    if (model.class_gauss && model.class_gauss->fitted) {
        const ClassGaussians& c = *model.class_gauss;
        doc["class_gaussians"] = json{{"classes", c.classes},
                                      {"dim", c.dim},
                                      {"mean", c.mean},
                                      {"var", c.var},
                                      {"count", c.count}};
    } else {
        doc["class_gaussians"] = nullptr;
    }
    doc["density_calib"] = calib_to_json(model.density_calib);
    doc["energy_calib"] = calib_to_json(model.energy_calib);
    doc["gmm_energy_calib"] = calib_to_json(model.gmm_energy_calib);
    doc["logit_energy_calib"] = calib_to_json(model.logit_energy_calib);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << doc.dump(1) << "\n";
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("load_checkpoint: cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    json doc;
    try {
        doc = json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("load_checkpoint: invalid JSON: ") + e.what());
    }
    try {
        if (!doc.is_object() || !doc.contains("format_version"))
            throw FormatError("load_checkpoint: missing format_version");
        const int version = doc.at("format_version").get<int>();
        if (version != kCheckpointVersion)
            throw FormatError("load_checkpoint: unsupported format_version " +
                              std::to_string(version));

        GemConfig cfg = gem_config_from_json_text(doc.at("gem").dump());
        const std::uint64_t seed = doc.at("seed").get<std::uint64_t>();
        LoadedCheckpoint loaded{GemModel(cfg, seed), seed,
                                doc.at("trained_epochs").get<std::size_t>()};
        GemModel& model = loaded.model;

        const json& layers = doc.at("layers");
        auto names = named_layers(model);
        if (!layers.is_array() || layers.size() != names.size())
            throw FormatError("load_checkpoint: expected " + std::to_string(names.size()) +
                              " layers, found " + std::to_string(layers.size()));
        for (std::size_t i = 0; i < names.size(); ++i) {
            const json& l = layers.at(i);
            LinearLayer& layer = *names[i].second;
            if (l.at("name").get<std::string>() != names[i].first ||
                l.at("in").get<std::size_t>() != layer.in_dim() ||
                l.at("out").get<std::size_t>() != layer.out_dim())
                throw FormatError("load_checkpoint: layer mismatch at " + names[i].first);
            std::vector<double> w = l.at("w").get<std::vector<double>>();
            std::vector<double> b = l.at("b").get<std::vector<double>>();
            if (w.size() != layer.W.size() || b.size() != layer.b.size())
                throw FormatError("load_checkpoint: weight shape mismatch at " +
                                  names[i].first);
            layer.W.data() = std::move(w);
            layer.b.data() = std::move(b);
            layer.sn_enabled = l.at("sn").get<bool>();
            layer.sn_warned = l.at("sn_warned").get<bool>();
            layer.sn_u = l.at("sn_u").get<std::vector<double>>();
            layer.sn_v = l.at("sn_v").get<std::vector<double>>();
        }

        if (!doc.at("gmm").is_null()) {
            const json& g = doc.at("gmm");
            GmmModel m;
            m.n_components = g.at("components").get<std::size_t>();
            m.dim = g.at("dim").get<std::size_t>();
            m.full_cov = g.at("full_cov").get<bool>();
            m.weights = g.at("weights").get<std::vector<double>>();
            m.means = g.at("means").get<std::vector<std::vector<double>>>();
            m.covs = g.at("covs").get<std::vector<std::vector<double>>>();
            m.reseed_events = g.at("reseed_events").get<int>();
            m.fitted = true;
            if (m.weights.size() != m.n_components || m.means.size() != m.n_components ||
                m.covs.size() != m.n_components)
                throw FormatError("load_checkpoint: inconsistent density mixture block");
            model.gmm = std::move(m);
        }
        if (!doc.at("class_gaussians").is_null()) {
            const json& c = doc.at("class_gaussians");
            ClassGaussians cg;
            cg.classes = c.at("classes").get<std::size_t>();
            cg.dim = c.at("dim").get<std::size_t>();
            cg.mean = c.at("mean").get<std::vector<std::vector<double>>>();
            cg.var = c.at("var").get<std::vector<std::vector<double>>>();
            cg.count = c.at("count").get<std::vector<std::size_t>>();
            cg.fitted = true;
            if (cg.mean.size() != cg.classes || cg.var.size() != cg.classes ||
                cg.count.size() != cg.classes)
                throw FormatError("load_checkpoint: inconsistent class-Gaussian block");
            model.class_gauss = std::move(cg);
        }
        model.density_calib = calib_from_json(doc.at("density_calib"), "density_calib");
        model.energy_calib = calib_from_json(doc.at("energy_calib"), "energy_calib");
        model.gmm_energy_calib =
            calib_from_json(doc.at("gmm_energy_calib"), "gmm_energy_calib");
        model.logit_energy_calib =
            calib_from_json(doc.at("logit_energy_calib"), "logit_energy_calib");
        return loaded;
    } catch (const json::exception& e) {
        throw FormatError(std::string("load_checkpoint: ") + e.what());
    }
}

}  // namespace gem
