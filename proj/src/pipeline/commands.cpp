#include "derainsplat/pipeline/commands.hpp"

#include "derainsplat/common/error.hpp"
#include "derainsplat/io/image.hpp"
#include "derainsplat/pipeline/checkpoint.hpp"
#include "derainsplat/pipeline/dataset.hpp"
#include "derainsplat/pipeline/manifest.hpp"
#include "derainsplat/pipeline/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace drs::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string out_path(const RunConfig& c, const std::string& name) {
    fs::create_directories(c.output_dir);
    return (fs::path(c.output_dir) / name).string();
}

std::string numbered(const std::string& dir, std::size_t k) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu.png", k);
    fs::create_directories(dir);
    return (fs::path(dir) / buf).string();
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open '" + path + "' for writing");
    os << j.dump(2) << '\n';
}

void log(const CommandOptions& o, const std::string& msg) {
    if (!o.quiet) std::cout << msg << std::endl;
}

std::vector<std::size_t> selected_views(const CommandOptions& o, std::size_t available) {
    if (o.all_views) {
        std::vector<std::size_t> all(available);
        for (std::size_t k = 0; k < available; ++k) all[k] = k;
        return all;
    }
    for (std::size_t k : o.views)
        if (k >= available)
            throw ValidationError("render: view " + std::to_string(k) + " not in the manifest (" +
                                  std::to_string(available) + " views)");
    return o.views;
}

void check_compatible(const Checkpoint& ck, const SceneManifest& m) {
    if (ck.result.scene.flatland != m.flatland)
        throw ValidationError("checkpoint and manifest disagree on flatland mode");
    for (const auto& v : m.views) {
        if (v.camera && (v.camera->width != ck.result.scene.width || v.camera->height != ck.result.scene.height))
            throw ValidationError("camera of view " + std::to_string(v.view_index) +
                                  " does not match the checkpoint's image size");
    }
}

}  // namespace

RunConfig resolve_config(const CommandOptions& o) {
    json j = json::object();
    if (!o.config.empty()) {
        std::ifstream is(o.config);
        try {
            j = json::parse(is);
        } catch (const json::exception& e) {
            throw ValidationError("config '" + o.config + "': " + e.what());
        }
        if (!j.is_object()) throw ValidationError("config '" + o.config + "' must be a JSON object");
    }
    // Flags are applied to the JSON so they behave exactly like config keys.
    if (o.seed_set) j["seed"] = o.seed;
    if (!o.out.empty()) j["output_dir"] = o.out;
    if (o.flatland) j["reconstruct"]["flatland"] = true;
    if (o.no_enhance) j["reconstruct"]["use_enhancer"] = false;
    if (o.no_mask) j["reconstruct"]["use_mask"] = false;
    if (o.no_chan_attn) j["reconstruct"]["use_channel_attention"] = false;
    return parse_run_config(j);
}

int run_synth(const CommandOptions& o) {
    const RunConfig c = resolve_config(o);
    if (o.pairs) {
        const auto pairs = synth_pairs(c.rain, c.synth.pairs, c.synth.height, c.synth.width, c.seed);
        write_pairs(pairs, c.output_dir);
        log(o, "wrote " + std::to_string(pairs.size()) + " pairs to " + out_path(c, "pairs.json"));
        return 0;
    }
    const SyntheticScene scene =
        c.reconstruct.flatland ? synth_flatland_scene(c.rain, c.synth) : synth_3d_scene(c.rain, c.synth);
    const SceneManifest m = write_scene(scene, c.rain, c.output_dir);
    log(o, "wrote " + std::to_string(m.views.size()) + " views to " + out_path(c, "manifest.json"));
    return 0;
}

int run_train_enhancer(const CommandOptions& o) {
    const RunConfig c = resolve_config(o);
    std::vector<enhance::ImagePair> all =
        o.data.empty() ? synth_pairs(c.rain, c.synth.pairs, c.synth.height, c.synth.width, c.seed) : load_pairs(o.data);
    const std::size_t n_val = all.size() >= 10 ? all.size() / 10 : 0;
    std::vector<enhance::ImagePair> train(all.begin(), all.end() - static_cast<std::ptrdiff_t>(n_val));
    std::vector<enhance::ImagePair> val(all.end() - static_cast<std::ptrdiff_t>(n_val), all.end());
    enhance::Enhancer net(c.enhancer, c.seed);
    const auto rep = enhance::train_enhancer(net, train, val, c.train);
    for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e)
        log(o, "epoch " + std::to_string(e + 1) + " loss " + std::to_string(rep.epoch_loss[e]) + " val_psnr " +
                   std::to_string(rep.val_psnr[e]));
    const std::string path = o.weights.empty() ? out_path(c, "enhancer.drs") : o.weights;
    save_enhancer(path, net);
    log(o, "best epoch " + std::to_string(rep.best_epoch + 1) + " (" + std::to_string(rep.best_val_psnr) +
               " dB); weights in " + path);
    return 0;
}

int run_enhance(const CommandOptions& o) {
    const RunConfig c = resolve_config(o);
    if (o.weights.empty()) throw ValidationError("enhance: --weights is required");
    const enhance::Enhancer net = load_enhancer(o.weights);
    const SceneManifest m = load_manifest(o.manifest);
    for (const auto& v : load_training_views(m))
        io::write_png(numbered(out_path(c, "enhanced"), v.index), net.enhance(v.observed));
    log(o, "enhanced " + std::to_string(m.views.size()) + " views");
    return 0;
}

int run_reconstruct(const CommandOptions& o) {
    RunConfig c = resolve_config(o);
    const SceneManifest m = load_manifest(o.manifest);
    if (m.flatland != c.reconstruct.flatland)
        throw ValidationError(std::string("reconstruct: manifest is ") + (m.flatland ? "flatland" : "3D") +
                              " but the config is not; pass --flatland or fix the manifest");
    std::optional<enhance::Enhancer> net;
    if (c.reconstruct.use_enhancer) {
        if (o.weights.empty())
            throw ValidationError("reconstruct: enhancer weights are required (--weights), or pass --no-enhance");
        net.emplace(load_enhancer(o.weights));
    }
    const std::vector<TrainingView> views = load_training_views(m);
    const std::vector<splat::Point> points = m.points ? load_points(*m.points) : std::vector<splat::Point>{};
    ReconstructResult r = prepare_reconstruction(views, net ? &*net : nullptr, c.reconstruct, points);
    const std::size_t every = std::max<std::size_t>(1, c.reconstruct.iterations / 20);
    const std::string ckpt = out_path(c, "checkpoint.drs");
    try {
        optimize(r, views, c.reconstruct, [&](const LossRecord& rec) {
            if (rec.iteration % every == 0)
                log(o, "iter " + std::to_string(rec.iteration) + " loss " + std::to_string(rec.total) + " mask " +
                           std::to_string(rec.mask_mean));
        });
    } catch (const NumericalError&) {
        save_reconstruction(ckpt, r, c);
        write_loss_csv(out_path(c, "loss.csv"), r.history);
        std::cerr << "last good state saved to " << ckpt << '\n';
        throw;
    }
    save_reconstruction(ckpt, r, c);
    write_loss_csv(out_path(c, "loss.csv"), r.history);
    write_json_file(out_path(c, "config.json"), to_json(c));
    ad::NoGradScope no_grad;
    for (const auto& v : views) {
        io::write_png(numbered(out_path(c, "renders"), v.index), r.scene.render(v.camera).color);
        if (o.dump_masks) io::write_png(numbered(out_path(c, "masks"), v.index), predict_mask(r, v.index));
    }
    log(o, "checkpoint " + ckpt);
    return 0;
}

int run_render(const CommandOptions& o) {
    RunConfig out_cfg = resolve_config(o);
    const Checkpoint ck = load_reconstruction(o.checkpoint);
    ad::NoGradScope no_grad;
    std::size_t written = 0;
    if (!o.manifest.empty()) {
        const SceneManifest m = load_manifest(o.manifest);
        check_compatible(ck, m);
        for (std::size_t k : selected_views(o, m.views.size())) {
            io::write_png(numbered(out_path(out_cfg, "renders"), k), ck.result.scene.render(m.views[k].camera).color);
            ++written;
        }
    } else if (!o.views.empty() || o.all_views) {
        throw ValidationError("render: --views needs --manifest");
    }
    if (!o.camera.empty()) {
        std::ifstream is(o.camera);
        if (!is) throw ValidationError("render: cannot open camera file '" + o.camera + "'");
        json j;
        try {
            j = json::parse(is);
        } catch (const json::exception& e) {
            throw ValidationError("render: camera file: " + std::string(e.what()));
        }
        if (!j.is_array()) j = json::array({j});
        for (std::size_t i = 0; i < j.size(); ++i) {
            const splat::Camera cam = camera_from_json(j[i]);
            if (!ck.result.scene.flatland && (cam.width != ck.result.scene.width || cam.height != ck.result.scene.height))
                throw ValidationError("render: novel camera " + std::to_string(i) + " has a different image size");
            io::write_png(numbered(out_path(out_cfg, "novel"), i), ck.result.scene.render(cam).color);
            ++written;
        }
    }
    log(o, "rendered " + std::to_string(written) + " views");
    return 0;
}

int run_eval(const CommandOptions& o) {
    const RunConfig out_cfg = resolve_config(o);
    const Checkpoint ck = load_reconstruction(o.checkpoint);
    const SceneManifest m = load_manifest(o.manifest);
    check_compatible(ck, m);
    const std::vector<Tensor> clean = load_clean_images(m);
    std::vector<Tensor> renders;
    ad::NoGradScope no_grad;
    for (const auto& v : m.views) renders.push_back(ck.result.scene.render(v.camera).color);
    const json j = metrics_to_json(evaluate_renders(m.name, renders, clean));
    validate_metrics_json(j);
    write_json_file(out_path(out_cfg, "metrics.json"), j);
    log(o, "mean psnr " + std::to_string(j["mean"]["psnr"].get<double>()) + " ssim " +
               std::to_string(j["mean"]["ssim"].get<double>()));
    return 0;
}

int run_report(const CommandOptions& o) {
    const RunConfig out_cfg = resolve_config(o);
    const Checkpoint ck = load_reconstruction(o.checkpoint);
    const SceneManifest m = load_manifest(o.manifest);
    check_compatible(ck, m);
    const std::vector<TrainingView> views = load_training_views(m);
    const bool clean = m.has_clean_images();
    const std::vector<Tensor> gt = clean ? load_clean_images(m) : std::vector<Tensor>{};
    ad::NoGradScope no_grad;
    std::vector<std::vector<Tensor>> rows;
    CommandOptions sel = o;
    if (sel.views.empty()) sel.all_views = true;
    for (std::size_t k : selected_views(sel, views.size())) {
        std::vector<Tensor> row{views[k].observed};
        if (k < ck.result.targets.size()) row.push_back(ck.result.targets[k]);
        row.push_back(ck.result.scene.render(views[k].camera).color);
        if (ck.result.mask && k < ck.result.targets.size()) row.push_back(predict_mask(ck.result, k));
        if (clean) row.push_back(gt[k]);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        log(o, "no views selected");
        return 0;
    }
    const std::string path = out_path(out_cfg, "report.png");
    io::write_png(path, comparison_grid(rows));
    log(o, "columns: rainy | target | render" + std::string(ck.result.mask ? " | mask" : "") +
               (clean ? " | clean" : "") + "; written to " + path);
    return 0;
}

}  // namespace drs::pipeline
