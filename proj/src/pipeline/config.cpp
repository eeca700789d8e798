#include "derainsplat/pipeline/config.hpp"

#include "derainsplat/common/error.hpp"

#include <fstream>
#include <set>

namespace drs::pipeline {

using nlohmann::json;

namespace {

// Reads optional keys from one JSON object and rejects keys nobody asked for.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ValidationError("config: '" + path_ + "' must be an object");
    }

    template <class T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception&) {
            throw ValidationError("config: '" + path_ + "." + key + "' has the wrong type");
        }
    }

    void read_range(const char* key, rain::Range& out) {
        std::vector<double> v{out.lo, out.hi};
        read(key, v);
        if (v.size() != 2) throw ValidationError("config: '" + path_ + "." + key + "' must be [lo, hi]");
        out = {v[0], v[1]};
    }

    bool has(const char* key) const { return j_.contains(key); }

    Section sub(const char* key) {
        seen_.insert(key);
        static const json empty = json::object();
        auto it = j_.find(key);
        return Section(it == j_.end() ? empty : *it, path_.empty() ? key : path_ + "." + key);
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ValidationError("config: unknown key '" + (path_.empty() ? "" : path_ + ".") + it.key() + "'");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace

void RunConfig::finalize() {
    reconstruct.seed = seed;
    train.seed = seed;
    reconstruct.validate();
    enhancer.validate();
    if (train.epochs == 0 || train.batch_size == 0 || !(train.lr > 0.0))
        throw ValidationError("config: train epochs, batch_size and lr must be positive");
    if (synth.views == 0 || synth.height < 4 || synth.width < 4)
        throw ValidationError("config: synth needs at least one view of at least 4x4");
    for (const rain::Range* r : {&rain.streaks.n, &rain.streaks.l, &rain.streaks.theta, &rain.streaks.w})
        if (!(r->lo <= r->hi)) throw ValidationError("config: rain ranges must satisfy lo <= hi");
}

RunConfig parse_run_config(const json& j) {
    RunConfig c;
    Section root(j, "");
    root.read("seed", c.seed);
    root.read("output_dir", c.output_dir);

    Section rec = root.sub("reconstruct");
    auto& r = c.reconstruct;
    rec.read("iterations", r.iterations);
    rec.read("flatland", r.flatland);
    rec.read("num_splats", r.num_splats);
    rec.read("mask_warmup", r.mask_warmup);
    rec.read("flat_initial_opacity", r.flat_initial_opacity);
    rec.read("background", r.background);
    rec.read("use_enhancer", r.use_enhancer);
    rec.read("use_mask", r.use_mask);
    rec.read("use_channel_attention", r.use_channel_attention);
    if (r.flatland && !rec.has("lr")) r.lr = LearningRates::flatland_defaults();
    Section lr = rec.sub("lr");
    lr.read("means", r.lr.means);
    lr.read("scaling", r.lr.scaling);
    lr.read("sh", r.lr.sh);
    lr.read("mask", r.lr.mask);
    lr.read("opacity", r.lr.opacity);
    lr.read("rotation", r.lr.rotation);
    lr.finish();
    Section init = rec.sub("init");
    init.read("sh_degree", r.init.sh_degree);
    init.read("initial_opacity", r.init.initial_opacity);
    init.read("neighbors", r.init.neighbors);
    init.finish();
    rec.finish();

    Section loss = root.sub("loss");
    loss.read("lambda_ssim", r.loss.lambda_ssim);
    loss.read("lambda_reg", r.loss.lambda_reg);
    loss.read("lambda_reg_per_pixel", r.loss.lambda_reg_per_pixel);
    loss.read("ssim_window", r.loss.ssim_window);
    loss.read("ssim_sigma", r.loss.ssim_sigma);
    loss.read("c1", r.loss.c1);
    loss.read("c2", r.loss.c2);
    loss.finish();

    Section mask = root.sub("mask");
    mask.read("feature_channels", r.mask.feature_channels);
    mask.read("unet_channels", r.mask.unet_channels);
    mask.read("cutoff", r.mask.cutoff);
    mask.read("zero_init_output", r.mask.zero_init_output);
    mask.read("output_init_std", r.mask.output_init_std);
    mask.finish();

    Section enh = root.sub("enhancer");
    enh.read("levels", c.enhancer.levels);
    enh.read("encoder_blocks", c.enhancer.encoder_blocks);
    enh.read("bottleneck_blocks", c.enhancer.bottleneck_blocks);
    enh.read("decoder_blocks", c.enhancer.decoder_blocks);
    enh.read("base_channels", c.enhancer.base_channels);
    std::string attention = enhance::attention_mode_name(c.enhancer.attention);
    enh.read("attention", attention);
    c.enhancer.attention = enhance::parse_attention_mode(attention);
    enh.read("topk_fraction", c.enhancer.topk_fraction);
    enh.read("ffn_expansion", c.enhancer.ffn_expansion);
    enh.finish();

    Section train = root.sub("train");
    train.read("epochs", c.train.epochs);
    train.read("lr", c.train.lr);
    train.read("batch_size", c.train.batch_size);
    train.read("crop", c.train.crop);
    train.finish();

    Section rain = root.sub("rain");
    std::string mode = rain::rain_mode_name(c.rain.mode);
    rain.read("mode", mode);
    c.rain.mode = rain::parse_rain_mode(mode);
    rain.read("gain", c.rain.gain);
    rain.read("blur_sigma_factor", c.rain.blur_sigma_factor);
    rain.read("base_seed", c.rain.base_seed);
    Section streaks = rain.sub("streaks");
    streaks.read_range("n", c.rain.streaks.n);
    streaks.read_range("l", c.rain.streaks.l);
    streaks.read_range("theta", c.rain.streaks.theta);
    streaks.read_range("w", c.rain.streaks.w);
    streaks.finish();
    rain.read("drop_count", c.rain.drop_count);
    rain.read_range("drop_radius", c.rain.drop_radius);
    rain.read("drop_blur_sigma", c.rain.drop_blur_sigma);
    rain.finish();

    Section synth = root.sub("synth");
    synth.read("views", c.synth.views);
    synth.read("height", c.synth.height);
    synth.read("width", c.synth.width);
    synth.read("pairs", c.synth.pairs);
    synth.read("texture_seed", c.synth.texture_seed);
    synth.finish();

    root.finish();
    c.finalize();
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("config: cannot open '" + path + "'");
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw ValidationError("config '" + path + "': " + e.what());
    }
    return parse_run_config(j);
}

json to_json(const RunConfig& c) {
    const auto& r = c.reconstruct;
    auto range = [](const rain::Range& x) { return json::array({x.lo, x.hi}); };
    return {
        {"seed", c.seed},
        {"output_dir", c.output_dir},
        {"reconstruct",
         {{"iterations", r.iterations},
          {"flatland", r.flatland},
          {"num_splats", r.num_splats},
          {"mask_warmup", r.mask_warmup},
          {"flat_initial_opacity", r.flat_initial_opacity},
          {"background", r.background},
          {"use_enhancer", r.use_enhancer},
          {"use_mask", r.use_mask},
          {"use_channel_attention", r.use_channel_attention},
          {"lr",
           {{"means", r.lr.means},
            {"scaling", r.lr.scaling},
            {"sh", r.lr.sh},
            {"mask", r.lr.mask},
            {"opacity", r.lr.opacity},
            {"rotation", r.lr.rotation}}},
          {"init",
           {{"sh_degree", r.init.sh_degree},
            {"initial_opacity", r.init.initial_opacity},
            {"neighbors", r.init.neighbors}}}}},
        {"loss",
         {{"lambda_ssim", r.loss.lambda_ssim},
          {"lambda_reg", r.loss.lambda_reg},
          {"lambda_reg_per_pixel", r.loss.lambda_reg_per_pixel},
          {"ssim_window", r.loss.ssim_window},
          {"ssim_sigma", r.loss.ssim_sigma},
          {"c1", r.loss.c1},
          {"c2", r.loss.c2}}},
        {"mask",
         {{"feature_channels", r.mask.feature_channels},
          {"unet_channels", r.mask.unet_channels},
          {"cutoff", r.mask.cutoff},
          {"zero_init_output", r.mask.zero_init_output},
          {"output_init_std", r.mask.output_init_std}}},
        {"enhancer",
         {{"levels", c.enhancer.levels},
          {"encoder_blocks", c.enhancer.encoder_blocks},
          {"bottleneck_blocks", c.enhancer.bottleneck_blocks},
          {"decoder_blocks", c.enhancer.decoder_blocks},
          {"base_channels", c.enhancer.base_channels},
          {"attention", enhance::attention_mode_name(c.enhancer.attention)},
          {"topk_fraction", c.enhancer.topk_fraction},
          {"ffn_expansion", c.enhancer.ffn_expansion}}},
        {"train",
         {{"epochs", c.train.epochs},
          {"lr", c.train.lr},
          {"batch_size", c.train.batch_size},
          {"crop", c.train.crop}}},
        {"rain",
         {{"mode", rain::rain_mode_name(c.rain.mode)},
          {"gain", c.rain.gain},
          {"blur_sigma_factor", c.rain.blur_sigma_factor},
          {"base_seed", c.rain.base_seed},
          {"streaks",
           {{"n", range(c.rain.streaks.n)},
            {"l", range(c.rain.streaks.l)},
            {"theta", range(c.rain.streaks.theta)},
            {"w", range(c.rain.streaks.w)}}},
          {"drop_count", c.rain.drop_count},
          {"drop_radius", range(c.rain.drop_radius)},
          {"drop_blur_sigma", c.rain.drop_blur_sigma}}},
        {"synth",
         {{"views", c.synth.views},
          {"height", c.synth.height},
          {"width", c.synth.width},
          {"pairs", c.synth.pairs},
          {"texture_seed", c.synth.texture_seed}}},
    };
}

}  // namespace drs::pipeline
