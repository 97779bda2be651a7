#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvcons/analysis.hpp"
#include "mvcons/config.hpp"
#include "mvcons/data.hpp"
#include "mvcons/errors.hpp"
#include "mvcons/gradcheck.hpp"
#include "mvcons/svg.hpp"
#include "mvcons/threads.hpp"
#include "mvcons/training.hpp"
#include "mvcons/tsne.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- config plumbing ---------------------------------------------------------

// Dotted CLI overrides layered over an optional JSON config file.
struct ConfigCli {
    std::string config_path;

    std::optional<int> image_size, stem_channels, latent_dim, hidden_dim, num_classes;
    std::optional<std::vector<int>> stage_blocks, stage_dims;

    std::optional<double> learning_rate, weight_decay, lambda, lr_step_factor;
    std::optional<int> batch_size, epochs, lr_step_epochs;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> adapt_class_mode;

    std::optional<double> flip_p, brightness, contrast, saturation, hue, rotation_degrees,
        crop_scale_min, crop_scale_max, crop_ratio_min, crop_ratio_max;

    void register_options(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file (flags override its values)");

        cmd->add_option("--model.image_size", image_size, "input image side length");
        cmd->add_option("--model.stem_channels", stem_channels, "stem conv output channels");
        cmd->add_option("--model.stage_blocks", stage_blocks, "blocks per stage")->delimiter(',');
        cmd->add_option("--model.stage_dims", stage_dims, "channels per stage")->delimiter(',');
        cmd->add_option("--model.latent_dim", latent_dim, "latent projection width");
        cmd->add_option("--model.hidden_dim", hidden_dim, "classifier hidden width");
        cmd->add_option("--model.num_classes", num_classes, "class count (default: from data)");

        cmd->add_option("--train.learning_rate", learning_rate, "Adam learning rate");
        cmd->add_option("--train.weight_decay", weight_decay, "coupled L2 weight decay");
        cmd->add_option("--train.batch_size", batch_size, "mini-batch size");
        cmd->add_option("--train.lambda", lambda, "consistency loss weight");
        cmd->add_option("--train.epochs", epochs, "training epochs");
        cmd->add_option("--train.lr_step_epochs", lr_step_epochs, "epochs per LR decay step");
        cmd->add_option("--train.lr_step_factor", lr_step_factor, "LR decay factor");
        cmd->add_option("--train.seed", seed, "RNG seed");
        cmd->add_option("--train.adapt_class_mode", adapt_class_mode,
                        "self_distill | labeled_probe | off");

        cmd->add_option("--augment.flip_p", flip_p, "horizontal flip probability");
        cmd->add_option("--augment.brightness", brightness, "brightness jitter magnitude");
        cmd->add_option("--augment.contrast", contrast, "contrast jitter magnitude");
        cmd->add_option("--augment.saturation", saturation, "saturation jitter magnitude");
        cmd->add_option("--augment.hue", hue, "hue jitter (fraction of a turn)");
        cmd->add_option("--augment.rotation_degrees", rotation_degrees, "max |rotation| in degrees");
        cmd->add_option("--augment.crop_scale_min", crop_scale_min, "min crop area fraction");
        cmd->add_option("--augment.crop_scale_max", crop_scale_max, "max crop area fraction");
        cmd->add_option("--augment.crop_ratio_min", crop_ratio_min, "min crop aspect ratio");
        cmd->add_option("--augment.crop_ratio_max", crop_ratio_max, "max crop aspect ratio");
    }

    mvcons::ExperimentConfig resolve() const {
        mvcons::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = mvcons::load_config_file(config_path);

        const auto set = [](auto& dst, const auto& src) {
            if (src) dst = *src;
        };
        set(cfg.model.image_size, image_size);
        set(cfg.model.stem_channels, stem_channels);
        set(cfg.model.stage_blocks, stage_blocks);
        set(cfg.model.stage_dims, stage_dims);
        set(cfg.model.latent_dim, latent_dim);
        set(cfg.model.hidden_dim, hidden_dim);
        set(cfg.model.num_classes, num_classes);

        set(cfg.train.learning_rate, learning_rate);
        set(cfg.train.weight_decay, weight_decay);
        set(cfg.train.batch_size, batch_size);
        set(cfg.train.lambda, lambda);
        set(cfg.train.epochs, epochs);
        set(cfg.train.lr_step_epochs, lr_step_epochs);
        set(cfg.train.lr_step_factor, lr_step_factor);
        set(cfg.train.seed, seed);
        if (adapt_class_mode) {
            cfg.train.adapt_class_mode = mvcons::adapt_class_mode_from_string(*adapt_class_mode);
        }

        set(cfg.augment.flip_p, flip_p);
        set(cfg.augment.brightness, brightness);
        set(cfg.augment.contrast, contrast);
        set(cfg.augment.saturation, saturation);
        set(cfg.augment.hue, hue);
        set(cfg.augment.rotation_degrees, rotation_degrees);
        set(cfg.augment.crop_scale_min, crop_scale_min);
        set(cfg.augment.crop_scale_max, crop_scale_max);
        set(cfg.augment.crop_ratio_min, crop_ratio_min);
        set(cfg.augment.crop_ratio_max, crop_ratio_max);
        return cfg;
    }
};

void write_run_json(const fs::path& out_file, const std::string& command, const json& details) {
    json run;
    run["command"] = command;
    for (const auto& [k, v] : details.items()) run[k] = v;
    const fs::path dir = out_file.parent_path().empty() ? "." : out_file.parent_path();
    std::ofstream os(dir / "run.json");
    if (!os) throw mvcons::DataError("cannot write run.json under " + dir.string());
    os << run.dump(2) << "\n";
}

mvcons::SynthSpec synth_spec_from_json(const json& j, const std::string& source) {
    mvcons::SynthSpec spec;
    for (const auto& [key, value] : j.items()) {
        if (key == "num_classes") spec.num_classes = value.get<int>();
        else if (key == "per_class") spec.per_class = value.get<int>();
        else if (key == "image_size") spec.image_size = value.get<int>();
        else if (key == "seed") spec.seed = value.get<std::uint64_t>();
        else if (key == "color_mode") spec.color_mode = mvcons::color_mode_from_string(value.get<std::string>());
        else if (key == "domain_shift") {
            for (const auto& [sk, sv] : value.items()) {
                if (sk == "hue_shift") spec.domain_shift.hue_shift = sv.get<double>();
                else if (sk == "brightness_scale") spec.domain_shift.brightness_scale = sv.get<double>();
                else if (sk == "rotation_deg") spec.domain_shift.rotation_deg = sv.get<double>();
                else if (sk == "noise_std") spec.domain_shift.noise_std = sv.get<double>();
                else throw mvcons::ConfigError(source + ": unknown key 'domain_shift." + sk + "'");
            }
        } else {
            throw mvcons::ConfigError(source + ": unknown key '" + key + "'");
        }
    }
    return spec;
}

json synth_spec_to_json(const mvcons::SynthSpec& spec) {
    return {{"num_classes", spec.num_classes},
            {"per_class", spec.per_class},
            {"image_size", spec.image_size},
            {"seed", spec.seed},
            {"color_mode", mvcons::to_string(spec.color_mode)},
            {"domain_shift",
             {{"hue_shift", spec.domain_shift.hue_shift},
              {"brightness_scale", spec.domain_shift.brightness_scale},
              {"rotation_deg", spec.domain_shift.rotation_deg},
              {"noise_std", spec.domain_shift.noise_std}}}};
}

// t-SNE 2-D CSV: id,label,domain,y0,y1,kl_final
void write_tsne_csv(const std::string& path, const mvcons::EmbeddingSet& emb,
                    const mvcons::TsneResult& res) {
    std::ofstream os(path);
    if (!os) throw mvcons::DataError("cannot write t-SNE CSV: " + path);
    os << "id,label,domain,y0,y1,kl_final\n";
    char buf[96];
    for (std::int64_t i = 0; i < emb.size(); ++i) {
        const auto idx = static_cast<std::size_t>(i);
        os << (idx < emb.ids.size() ? emb.ids[idx] : "") << "," << emb.labels[idx] << ","
           << (idx < emb.domains.size() ? emb.domains[idx] : "");
        std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%.17g", res.y[idx * 2], res.y[idx * 2 + 1],
                      res.kl_final);
        os << buf << "\n";
    }
}

std::vector<mvcons::ScatterPoint> read_tsne_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw mvcons::DataError("cannot open t-SNE CSV: " + path);
    std::string line;
    if (!std::getline(is, line)) throw mvcons::DataError("empty t-SNE CSV: " + path);

    std::vector<std::string> header;
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
    int label_col = -1, domain_col = -1, y0_col = -1, y1_col = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "label") label_col = static_cast<int>(i);
        if (header[i] == "domain") domain_col = static_cast<int>(i);
        if (header[i] == "y0") y0_col = static_cast<int>(i);
        if (header[i] == "y1") y1_col = static_cast<int>(i);
    }
    if (label_col < 0 || domain_col < 0 || y0_col < 0 || y1_col < 0) {
        throw mvcons::DataError(path + ": header must contain label, domain, y0, y1");
    }

    std::vector<mvcons::ScatterPoint> points;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != header.size()) {
            throw mvcons::DataError(path + ":" + std::to_string(line_no) + ": wrong field count");
        }
        try {
            points.push_back({std::stod(cells[static_cast<std::size_t>(y0_col)]),
                              std::stod(cells[static_cast<std::size_t>(y1_col)]),
                              std::stoi(cells[static_cast<std::size_t>(label_col)]),
                              cells[static_cast<std::size_t>(domain_col)]});
        } catch (const std::exception&) {
            throw mvcons::DataError(path + ":" + std::to_string(line_no) + ": malformed numeric field");
        }
    }
    return points;
}

void require_file(const std::string& path, const char* what) {
    if (!fs::exists(path)) {
        throw mvcons::DataError(std::string(what) + " not found: " + path);
    }
}

// ---- subcommands ---------------------------------------------------------------

int cmd_gen_data(const mvcons::SynthSpec& spec, const std::string& out_dir) {
    mvcons::generate_synthetic(spec, out_dir);
    write_run_json(fs::path(out_dir) / "x", "gen-data",
                   {{"spec", synth_spec_to_json(spec)}, {"out", out_dir}});
    std::cout << "wrote " << spec.num_classes * spec.per_class << " images per domain under "
              << out_dir << "\n";
    return 0;
}

int cmd_train_source(const ConfigCli& cli, const std::string& data_dir, const std::string& out_ckpt,
                     std::string log_path) {
    mvcons::ExperimentConfig cfg = cli.resolve();
    require_file(data_dir, "dataset directory");
    mvcons::DatasetSplit split = mvcons::load_image_folder(data_dir, cfg.model.image_size);
    if (cfg.model.num_classes == 0) cfg.model.num_classes = static_cast<int>(split.classes.size());
    cfg.model.validate();
    cfg.train.validate();

    auto params = mvcons::init_params<float>(cfg.model, cfg.train.seed);
    const auto log = mvcons::train_source(params, split, cfg.train);
    mvcons::save_checkpoint(out_ckpt, params);
    if (log_path.empty()) log_path = out_ckpt + ".log.csv";
    mvcons::write_log_csv(log_path, log);

    write_run_json(out_ckpt, "train-source",
                   {{"config", mvcons::config_to_json(cfg)},
                    {"data", data_dir},
                    {"checkpoint", out_ckpt},
                    {"log", log_path},
                    {"seed", cfg.train.seed}});
    if (!log.empty() && log.back().accuracy) {
        std::cout << "final training accuracy " << *log.back().accuracy << "\n";
    }
    std::cout << "checkpoint written to " << out_ckpt << "\n";
    return 0;
}

int cmd_adapt(const ConfigCli& cli, const std::string& ckpt, const std::string& data_dir,
              const std::string& out_ckpt, std::string log_path) {
    mvcons::ExperimentConfig cfg = cli.resolve();
    require_file(ckpt, "checkpoint");
    require_file(data_dir, "dataset directory");

    mvcons::ModelParams params = mvcons::load_checkpoint(ckpt);
    // model geometry always comes from the checkpoint
    cfg.model = params.config;
    cfg.augment.out_size = params.config.image_size;
    cfg.train.validate();
    cfg.augment.validate();

    mvcons::DatasetSplit split = mvcons::load_image_folder(data_dir, params.config.image_size);
    const auto log = mvcons::adapt_target(params, split, cfg.train, cfg.augment);
    mvcons::save_checkpoint(out_ckpt, params);
    if (log_path.empty()) log_path = out_ckpt + ".log.csv";
    mvcons::write_log_csv(log_path, log);

    write_run_json(out_ckpt, "adapt",
                   {{"config", mvcons::config_to_json(cfg)},
                    {"source_checkpoint", ckpt},
                    {"data", data_dir},
                    {"checkpoint", out_ckpt},
                    {"log", log_path},
                    {"seed", cfg.train.seed}});
    if (!log.empty()) {
        std::cout << "mean paired latent distance: first " << log.front().mean_pair_dist << ", last "
                  << log.back().mean_pair_dist << "\n";
    }
    std::cout << "adapted checkpoint written to " << out_ckpt << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& out_json) {
    require_file(ckpt, "checkpoint");
    require_file(data_dir, "dataset directory");
    mvcons::ModelParams params = mvcons::load_checkpoint(ckpt);
    mvcons::DatasetSplit split = mvcons::load_image_folder(data_dir, params.config.image_size);
    const double acc = mvcons::accuracy(params, split);

    json out = {{"accuracy", acc}, {"n_samples", split.samples.size()}};
    if (!out_json.empty()) {
        std::ofstream os(out_json);
        if (!os) throw mvcons::DataError("cannot write accuracy JSON: " + out_json);
        os << out.dump(2) << "\n";
        write_run_json(out_json, "eval",
                       {{"checkpoint", ckpt}, {"data", data_dir}, {"out", out_json}});
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_embed(const std::string& ckpt, const std::string& data_dir, const std::string& out_csv,
              bool raw, const std::string& tsne_csv, double perplexity, int iterations,
              std::uint64_t tsne_seed) {
    require_file(data_dir, "dataset directory");

    mvcons::EmbeddingSet emb;
    if (raw) {
        int size = 32;
        if (!ckpt.empty()) {
            require_file(ckpt, "checkpoint");
            size = mvcons::load_checkpoint(ckpt).config.image_size;
        }
        emb = mvcons::raw_pixel_embeddings(mvcons::load_image_folder(data_dir, size));
    } else {
        if (ckpt.empty()) throw mvcons::ConfigError("embed: --ckpt is required unless --raw is given");
        require_file(ckpt, "checkpoint");
        mvcons::ModelParams params = mvcons::load_checkpoint(ckpt);
        emb = mvcons::embed_split(params, mvcons::load_image_folder(data_dir, params.config.image_size));
    }

    mvcons::write_embeddings_csv(out_csv, emb);
    std::cout << "wrote " << emb.size() << " embeddings of dim " << emb.dim << " to " << out_csv
              << "\n";

    if (!tsne_csv.empty()) {
        const double max_perp = static_cast<double>(emb.size() - 1) / 3.0;
        const double perp = std::max(1.0, std::min(perplexity, max_perp));
        mvcons::TsneResult res = mvcons::tsne(emb, perp, iterations, tsne_seed);
        write_tsne_csv(tsne_csv, emb, res);
        std::cout << "t-SNE: KL " << res.kl_initial << " -> " << res.kl_final << ", wrote "
                  << tsne_csv << "\n";
    }
    write_run_json(out_csv, "embed",
                   {{"checkpoint", ckpt},
                    {"data", data_dir},
                    {"out", out_csv},
                    {"raw", raw},
                    {"tsne", tsne_csv},
                    {"perplexity", perplexity},
                    {"iterations", iterations},
                    {"seed", tsne_seed}});
    return 0;
}

int cmd_metrics(const std::string& emb_csv, const std::string& out_json) {
    require_file(emb_csv, "embeddings CSV");
    const mvcons::EmbeddingSet emb = mvcons::read_embeddings_csv(emb_csv);
    const mvcons::MetricsReport report = mvcons::compute_metrics(emb);
    const std::string payload = mvcons::metrics_to_json(report);
    if (!out_json.empty()) {
        std::ofstream os(out_json);
        if (!os) throw mvcons::DataError("cannot write metrics JSON: " + out_json);
        os << payload;
        write_run_json(out_json, "metrics", {{"embeddings", emb_csv}, {"out", out_json}});
    }
    std::cout << payload;
    return 0;
}

int cmd_plot(const std::string& tsne_csv, const std::string& out_svg) {
    require_file(tsne_csv, "t-SNE CSV");
    const auto points = read_tsne_csv(tsne_csv);
    mvcons::write_scatter_svg(out_svg, points);
    write_run_json(out_svg, "plot", {{"tsne", tsne_csv}, {"out", out_svg}});
    std::cout << "wrote " << points.size() << " points to " << out_svg << "\n";
    return 0;
}

int cmd_gradcheck() {
    const auto entries = mvcons::run_gradcheck_suite();
    bool all_pass = true;
    for (const auto& e : entries) {
        std::printf("%-24s max rel err %.3e  %s\n", e.name.c_str(), e.max_rel_err,
                    e.pass ? "PASS" : "FAIL");
        all_pass = all_pass && e.pass;
    }
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* threads = std::getenv("MVCONS_THREADS")) {
        mvcons::set_max_threads(std::atoi(threads));
    }

    CLI::App app{"source-free domain adaptation via multiview latent consistency"};
    app.require_subcommand(1);

    std::function<int()> runner;

    // gen-data
    {
        auto* cmd = app.add_subcommand("gen-data", "generate the synthetic two-domain dataset");
        auto spec = std::make_shared<mvcons::SynthSpec>();
        auto spec_file = std::make_shared<std::string>();
        auto out_dir = std::make_shared<std::string>();
        cmd->add_option("--spec", *spec_file, "JSON SynthSpec file (flags override it)");
        auto* o_classes = cmd->add_option("--classes", spec->num_classes, "number of classes");
        auto* o_per = cmd->add_option("--per-class", spec->per_class, "images per class per domain");
        auto* o_size = cmd->add_option("--size", spec->image_size, "image side length");
        auto* o_seed = cmd->add_option("--seed", spec->seed, "generator seed");
        auto color_mode = std::make_shared<std::string>();
        auto* o_color = cmd->add_option("--color-mode", *color_mode, "glyph colors: class | random");
        auto* o_hue = cmd->add_option("--shift.hue", spec->domain_shift.hue_shift,
                                      "target hue rotation (fraction of a turn)");
        auto* o_bright = cmd->add_option("--shift.brightness", spec->domain_shift.brightness_scale,
                                         "target brightness scale");
        auto* o_rot = cmd->add_option("--shift.rotation", spec->domain_shift.rotation_deg,
                                      "target rotation in degrees");
        auto* o_noise = cmd->add_option("--shift.noise", spec->domain_shift.noise_std,
                                        "target Gaussian noise std");
        cmd->add_option("--out", *out_dir, "output dataset directory")->required();
        cmd->callback([&runner, spec, spec_file, out_dir, color_mode, o_classes, o_per, o_size,
                       o_seed, o_color, o_hue, o_bright, o_rot, o_noise]() {
            runner = [=]() {
                mvcons::SynthSpec resolved;
                if (!spec_file->empty()) {
                    std::ifstream is(*spec_file);
                    if (!is) throw mvcons::ConfigError("cannot open spec file: " + *spec_file);
                    json j;
                    try {
                        is >> j;
                    } catch (const json::exception& e) {
                        throw mvcons::ConfigError(*spec_file + ": " + e.what());
                    }
                    resolved = synth_spec_from_json(j, *spec_file);
                }
                if (o_classes->count()) resolved.num_classes = spec->num_classes;
                if (o_per->count()) resolved.per_class = spec->per_class;
                if (o_size->count()) resolved.image_size = spec->image_size;
                if (o_seed->count()) resolved.seed = spec->seed;
                if (o_color->count()) resolved.color_mode = mvcons::color_mode_from_string(*color_mode);
                if (o_hue->count()) resolved.domain_shift.hue_shift = spec->domain_shift.hue_shift;
                if (o_bright->count())
                    resolved.domain_shift.brightness_scale = spec->domain_shift.brightness_scale;
                if (o_rot->count()) resolved.domain_shift.rotation_deg = spec->domain_shift.rotation_deg;
                if (o_noise->count()) resolved.domain_shift.noise_std = spec->domain_shift.noise_std;
                return cmd_gen_data(resolved, *out_dir);
            };
        });
    }

    // train-source
    {
        auto* cmd = app.add_subcommand("train-source", "train the classifier on the source domain");
        auto cli = std::make_shared<ConfigCli>();
        auto data = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto log = std::make_shared<std::string>();
        cli->register_options(cmd);
        cmd->add_option("--data", *data, "source image-folder directory")->required();
        cmd->add_option("--out", *out, "output checkpoint path")->required();
        cmd->add_option("--log", *log, "per-epoch CSV log path (default: <out>.log.csv)");
        cmd->callback([&runner, cli, data, out, log]() {
            runner = [=]() { return cmd_train_source(*cli, *data, *out, *log); };
        });
    }

    // adapt
    {
        auto* cmd = app.add_subcommand(
            "adapt", "source-free adaptation of a checkpoint to an unlabeled target domain");
        auto cli = std::make_shared<ConfigCli>();
        auto ckpt = std::make_shared<std::string>();
        auto data = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto log = std::make_shared<std::string>();
        cli->register_options(cmd);
        cmd->add_option("--ckpt", *ckpt, "source-trained checkpoint")->required();
        cmd->add_option("--data", *data, "target image-folder directory")->required();
        cmd->add_option("--out", *out, "output checkpoint path")->required();
        cmd->add_option("--log", *log, "per-epoch CSV log path (default: <out>.log.csv)");
        cmd->callback([&runner, cli, ckpt, data, out, log]() {
            runner = [=]() { return cmd_adapt(*cli, *ckpt, *data, *out, *log); };
        });
    }

    // eval
    {
        auto* cmd = app.add_subcommand("eval", "top-1 accuracy of a checkpoint on a labeled split");
        auto ckpt = std::make_shared<std::string>();
        auto data = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        cmd->add_option("--ckpt", *ckpt, "checkpoint path")->required();
        cmd->add_option("--data", *data, "labeled image-folder directory")->required();
        cmd->add_option("--out", *out, "accuracy JSON output path");
        cmd->callback([&runner, ckpt, data, out]() {
            runner = [=]() { return cmd_eval(*ckpt, *data, *out); };
        });
    }

    // embed
    {
        auto* cmd = app.add_subcommand("embed", "latent (or raw-pixel) embeddings, optionally t-SNE");
        auto ckpt = std::make_shared<std::string>();
        auto data = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto tsne_out = std::make_shared<std::string>();
        auto raw = std::make_shared<bool>(false);
        auto perplexity = std::make_shared<double>(30.0);
        auto iterations = std::make_shared<int>(500);
        auto seed = std::make_shared<std::uint64_t>(0);
        cmd->add_option("--ckpt", *ckpt, "checkpoint path (optional with --raw)");
        cmd->add_option("--data", *data, "image-folder directory")->required();
        cmd->add_option("--out", *out, "embeddings CSV output path")->required();
        cmd->add_flag("--raw", *raw, "flattened pixels instead of model latents");
        cmd->add_option("--tsne", *tsne_out, "also write a 2-D t-SNE CSV to this path");
        cmd->add_option("--perplexity", *perplexity, "t-SNE perplexity (clamped to (N-1)/3)");
        cmd->add_option("--iterations", *iterations, "t-SNE gradient descent iterations");
        cmd->add_option("--tsne-seed", *seed, "t-SNE init seed");
        cmd->callback([&runner, ckpt, data, out, raw, tsne_out, perplexity, iterations, seed]() {
            runner = [=]() {
                return cmd_embed(*ckpt, *data, *out, *raw, *tsne_out, *perplexity, *iterations, *seed);
            };
        });
    }

    // metrics
    {
        auto* cmd = app.add_subcommand("metrics", "clustering metrics of an embeddings CSV");
        auto emb = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        cmd->add_option("--embeddings", *emb, "embeddings CSV path")->required();
        cmd->add_option("--out", *out, "metrics JSON output path");
        cmd->callback(
            [&runner, emb, out]() { runner = [=]() { return cmd_metrics(*emb, *out); }; });
    }

    // plot
    {
        auto* cmd = app.add_subcommand("plot", "SVG scatter of a 2-D t-SNE CSV");
        auto tsne_in = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        cmd->add_option("--tsne", *tsne_in, "t-SNE CSV path")->required();
        cmd->add_option("--out", *out, "SVG output path")->required();
        cmd->callback(
            [&runner, tsne_in, out]() { runner = [=]() { return cmd_plot(*tsne_in, *out); }; });
    }

    // gradcheck
    {
        auto* cmd = app.add_subcommand("gradcheck", "finite-difference checks for every primitive");
        cmd->callback([&runner]() { runner = []() { return cmd_gradcheck(); }; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        return runner ? runner() : 2;
    } catch (const mvcons::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
