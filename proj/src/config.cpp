#include "crvae/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace crvae {

namespace {

using Json = nlohmann::ordered_json;

Json stages_to_json(const std::vector<ConvStage>& stages) {
    Json arr = Json::array();
    for (const ConvStage& s : stages) {
        Json j;
        j["width"] = s.width;
        j["stride"] = s.stride;
        j["ksize"] = s.ksize;
        j["pad"] = s.pad;
        arr.push_back(j);
    }
    return arr;
}

std::vector<ConvStage> stages_from_json(const Json& arr, const char* which) {
    if (!arr.is_array()) throw ConfigError(std::string("config: ") + which + " must be an array");
    std::vector<ConvStage> out;
    for (const Json& j : arr) {
        ConvStage s;
        s.width = j.at("width").get<int>();
        s.stride = j.at("stride").get<int>();
        s.ksize = j.at("ksize").get<int>();
        s.pad = j.at("pad").get<int>();
        for (const auto& [k, v] : j.items()) {
            (void)v;
            if (k != "width" && k != "stride" && k != "ksize" && k != "pad") {
                throw ConfigError("config: unknown stage key '" + k + "' in " + which);
            }
        }
        out.push_back(s);
    }
    return out;
}

Json to_json_tree(const TrainConfig& cfg) {
    Json net;
    net["variant"] = variant_name(cfg.net.variant);
    net["image_c"] = cfg.net.image_c;
    net["image_h"] = cfg.net.image_h;
    net["image_w"] = cfg.net.image_w;
    net["latent_c"] = cfg.net.latent_c;
    net["latent_h"] = cfg.net.latent_h;
    net["latent_w"] = cfg.net.latent_w;
    net["steps"] = cfg.net.steps;
    net["out_act"] = output_act_name(cfg.net.out_act);
    net["leak"] = cfg.net.leak;
    net["encoder"] = stages_to_json(cfg.net.encoder);
    net["decoder"] = stages_to_json(cfg.net.decoder);
    net["trunk"] = stages_to_json(cfg.net.trunk);

    Json coeffs;
    coeffs["alpha1"] = cfg.coeffs.alpha1;
    coeffs["alpha2"] = cfg.coeffs.alpha2;
    coeffs["beta"] = cfg.coeffs.beta;
    coeffs["kappa"] = cfg.coeffs.kappa;

    Json root;
    root["net"] = net;
    root["coeffs"] = coeffs;
    root["lr"] = cfg.lr;
    root["batch"] = cfg.batch;
    root["max_steps"] = cfg.max_steps;
    root["seed"] = cfg.seed;
    root["augment"] = cfg.augment;
    root["disc_trained"] = cfg.disc_trained;
    root["log_every"] = cfg.log_every;
    return root;
}

void reject_unknown(const Json& obj, std::initializer_list<const char*> known,
                    const char* where) {
    for (const auto& [k, v] : obj.items()) {
        (void)v;
        bool ok = false;
        for (const char* name : known) ok = ok || k == name;
        if (!ok) throw ConfigError(std::string("config: unknown key '") + k + "' in " + where);
    }
}

TrainConfig from_json_tree(const Json& root) {
    if (!root.is_object()) throw ConfigError("config: top level must be an object");
    reject_unknown(root,
                   {"net", "coeffs", "lr", "batch", "max_steps", "seed", "augment", "disc_trained",
                    "log_every"},
                   "config");
    TrainConfig cfg;
    if (root.contains("net")) {
        const Json& net = root.at("net");
        reject_unknown(net,
                       {"variant", "image_c", "image_h", "image_w", "latent_c", "latent_h",
                        "latent_w", "steps", "out_act", "leak", "encoder", "decoder", "trunk"},
                       "net");
        NetworkSpec& s = cfg.net;
        if (net.contains("variant")) s.variant = variant_from_name(net.at("variant").get<std::string>());
        if (net.contains("image_c")) s.image_c = net.at("image_c").get<int>();
        if (net.contains("image_h")) s.image_h = net.at("image_h").get<int>();
        if (net.contains("image_w")) s.image_w = net.at("image_w").get<int>();
        if (net.contains("latent_c")) s.latent_c = net.at("latent_c").get<int>();
        if (net.contains("latent_h")) s.latent_h = net.at("latent_h").get<int>();
        if (net.contains("latent_w")) s.latent_w = net.at("latent_w").get<int>();
        if (net.contains("steps")) s.steps = net.at("steps").get<int>();
        if (net.contains("out_act")) s.out_act = output_act_from_name(net.at("out_act").get<std::string>());
        if (net.contains("leak")) s.leak = net.at("leak").get<double>();
        if (net.contains("encoder")) s.encoder = stages_from_json(net.at("encoder"), "net.encoder");
        if (net.contains("decoder")) s.decoder = stages_from_json(net.at("decoder"), "net.decoder");
        if (net.contains("trunk")) s.trunk = stages_from_json(net.at("trunk"), "net.trunk");
    }
    if (root.contains("coeffs")) {
        const Json& c = root.at("coeffs");
        reject_unknown(c, {"alpha1", "alpha2", "beta", "kappa"}, "coeffs");
        if (c.contains("alpha1")) cfg.coeffs.alpha1 = c.at("alpha1").get<double>();
        if (c.contains("alpha2")) cfg.coeffs.alpha2 = c.at("alpha2").get<double>();
        if (c.contains("beta")) cfg.coeffs.beta = c.at("beta").get<double>();
        if (c.contains("kappa")) cfg.coeffs.kappa = c.at("kappa").get<double>();
    }
    if (root.contains("lr")) cfg.lr = root.at("lr").get<double>();
    if (root.contains("batch")) cfg.batch = root.at("batch").get<int>();
    if (root.contains("max_steps")) cfg.max_steps = root.at("max_steps").get<int>();
    if (root.contains("seed")) cfg.seed = root.at("seed").get<std::uint64_t>();
    if (root.contains("augment")) cfg.augment = root.at("augment").get<bool>();
    if (root.contains("disc_trained")) cfg.disc_trained = root.at("disc_trained").get<bool>();
    if (root.contains("log_every")) cfg.log_every = root.at("log_every").get<int>();
    cfg.validate();
    return cfg;
}

}  // namespace

std::string config_to_json(const TrainConfig& cfg) { return to_json_tree(cfg).dump(); }

TrainConfig config_from_json(const std::string& text) {
    Json root;
    try {
        root = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    try {
        return from_json_tree(root);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

void save_config(const std::string& path, const TrainConfig& cfg) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << to_json_tree(cfg).dump(2) << "\n";
}

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

}  // namespace crvae
