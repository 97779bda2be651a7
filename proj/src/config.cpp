#include "mvcons/config.hpp"

#include <fstream>

#include "mvcons/errors.hpp"

namespace mvcons {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, std::initializer_list<const char*> known,
                    const std::string& prefix, const std::string& source) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : known) {
            if (key == k) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw ConfigError(source + ": unknown key '" + prefix + key + "'");
        }
    }
}

template <typename T>
void get_if(const json& j, const char* key, T& out, const std::string& prefix,
            const std::string& source) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(source + ": field '" + prefix + key + "' has the wrong type");
    }
}

void parse_model(const json& j, ModelConfig& m, const std::string& source) {
    reject_unknown(j,
                   {"image_size", "stem_channels", "stage_blocks", "stage_dims", "latent_dim",
                    "hidden_dim", "num_classes"},
                   "model.", source);
    get_if(j, "image_size", m.image_size, "model.", source);
    get_if(j, "stem_channels", m.stem_channels, "model.", source);
    get_if(j, "stage_blocks", m.stage_blocks, "model.", source);
    get_if(j, "stage_dims", m.stage_dims, "model.", source);
    get_if(j, "latent_dim", m.latent_dim, "model.", source);
    get_if(j, "hidden_dim", m.hidden_dim, "model.", source);
    get_if(j, "num_classes", m.num_classes, "model.", source);
}

void parse_train(const json& j, TrainConfig& t, const std::string& source) {
    reject_unknown(j,
                   {"learning_rate", "weight_decay", "batch_size", "lambda", "epochs",
                    "lr_step_epochs", "lr_step_factor", "seed", "adapt_class_mode"},
                   "train.", source);
    get_if(j, "learning_rate", t.learning_rate, "train.", source);
    get_if(j, "weight_decay", t.weight_decay, "train.", source);
    get_if(j, "batch_size", t.batch_size, "train.", source);
    get_if(j, "lambda", t.lambda, "train.", source);
    get_if(j, "epochs", t.epochs, "train.", source);
    get_if(j, "lr_step_epochs", t.lr_step_epochs, "train.", source);
    get_if(j, "lr_step_factor", t.lr_step_factor, "train.", source);
    get_if(j, "seed", t.seed, "train.", source);
    if (j.contains("adapt_class_mode")) {
        std::string s;
        get_if(j, "adapt_class_mode", s, "train.", source);
        t.adapt_class_mode = adapt_class_mode_from_string(s);
    }
}

void parse_augment(const json& j, AugmentSpec& a, const std::string& source) {
    reject_unknown(j,
                   {"flip_p", "brightness", "contrast", "saturation", "hue", "rotation_degrees",
                    "crop_scale_min", "crop_scale_max", "crop_ratio_min", "crop_ratio_max",
                    "out_size"},
                   "augment.", source);
    get_if(j, "flip_p", a.flip_p, "augment.", source);
    get_if(j, "brightness", a.brightness, "augment.", source);
    get_if(j, "contrast", a.contrast, "augment.", source);
    get_if(j, "saturation", a.saturation, "augment.", source);
    get_if(j, "hue", a.hue, "augment.", source);
    get_if(j, "rotation_degrees", a.rotation_degrees, "augment.", source);
    get_if(j, "crop_scale_min", a.crop_scale_min, "augment.", source);
    get_if(j, "crop_scale_max", a.crop_scale_max, "augment.", source);
    get_if(j, "crop_ratio_min", a.crop_ratio_min, "augment.", source);
    get_if(j, "crop_ratio_max", a.crop_ratio_max, "augment.", source);
    get_if(j, "out_size", a.out_size, "augment.", source);
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j, const std::string& source_name) {
    if (!j.is_object()) throw ConfigError(source_name + ": top level must be a JSON object");
    reject_unknown(j, {"model", "train", "augment"}, "", source_name);
    ExperimentConfig cfg;
    if (j.contains("model")) parse_model(j.at("model"), cfg.model, source_name);
    if (j.contains("train")) parse_train(j.at("train"), cfg.train, source_name);
    if (j.contains("augment")) parse_augment(j.at("augment"), cfg.augment, source_name);
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return config_from_json(j, path);
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["model"] = {{"image_size", cfg.model.image_size},
                  {"stem_channels", cfg.model.stem_channels},
                  {"stage_blocks", cfg.model.stage_blocks},
                  {"stage_dims", cfg.model.stage_dims},
                  {"latent_dim", cfg.model.latent_dim},
                  {"hidden_dim", cfg.model.hidden_dim},
                  {"num_classes", cfg.model.num_classes}};
    j["train"] = {{"learning_rate", cfg.train.learning_rate},
                  {"weight_decay", cfg.train.weight_decay},
                  {"batch_size", cfg.train.batch_size},
                  {"lambda", cfg.train.lambda},
                  {"epochs", cfg.train.epochs},
                  {"lr_step_epochs", cfg.train.lr_step_epochs},
                  {"lr_step_factor", cfg.train.lr_step_factor},
                  {"seed", cfg.train.seed},
                  {"adapt_class_mode", to_string(cfg.train.adapt_class_mode)}};
    j["augment"] = {{"flip_p", cfg.augment.flip_p},
                    {"brightness", cfg.augment.brightness},
                    {"contrast", cfg.augment.contrast},
                    {"saturation", cfg.augment.saturation},
                    {"hue", cfg.augment.hue},
                    {"rotation_degrees", cfg.augment.rotation_degrees},
                    {"crop_scale_min", cfg.augment.crop_scale_min},
                    {"crop_scale_max", cfg.augment.crop_scale_max},
                    {"crop_ratio_min", cfg.augment.crop_ratio_min},
                    {"crop_ratio_max", cfg.augment.crop_ratio_max},
                    {"out_size", cfg.augment.out_size}};
    return j;
}

}  // namespace mvcons
