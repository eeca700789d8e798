#include "doctest.h"

#include "derainsplat/common/error.hpp"
#include "derainsplat/io/image.hpp"
#include "derainsplat/pipeline/checkpoint.hpp"
#include "derainsplat/pipeline/commands.hpp"
#include "derainsplat/pipeline/config.hpp"
#include "derainsplat/pipeline/dataset.hpp"
#include "derainsplat/pipeline/manifest.hpp"
#include "derainsplat/pipeline/report.hpp"
#include "derainsplat/rain/texture.hpp"
#include "test_util.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

using namespace drs;
using namespace drs::ad;
using namespace drs::pipeline;
using drs::test::bit_equal;
using nlohmann::json;

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("drs_" + tag + "_" + std::to_string(::getpid()))) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_json(const std::string& path, const json& j) {
    std::ofstream os(path);
    os << j.dump(2);
}

json read_json(const std::string& path) {
    std::ifstream is(path);
    return json::parse(is);
}

rain::SceneRainConfig light_rain() {
    rain::SceneRainConfig rc;
    rc.streaks.n = {5, 10};
    rc.streaks.l = {5, 9};
    rc.streaks.w = {3, 4};
    rc.gain = 6.0;
    return rc;
}

ReconstructConfig quick_flatland(std::size_t iterations) {
    ReconstructConfig cfg;
    cfg.flatland = true;
    cfg.iterations = iterations;
    cfg.num_splats = 48;
    cfg.mask_warmup = iterations / 3;
    cfg.lr = LearningRates::flatland_defaults();
    return cfg;
}

// Small flatland config used by the command tests.
json quick_config_json() {
    return {{"seed", 4},
            {"reconstruct", {{"iterations", 60}, {"num_splats", 32}, {"mask_warmup", 20}}},
            {"rain", {{"gain", 6.0}, {"streaks", {{"n", {5, 10}}, {"l", {5, 9}}}}}},
            {"synth", {{"views", 2}, {"height", 20}, {"width", 20}}}};
}

int exit_code(const std::string& cmd) {
    const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

// --- config ---------------------------------------------------------------------

TEST_CASE("run config round-trips through JSON") {
    RunConfig c;
    c.seed = 17;
    c.reconstruct.iterations = 321;
    c.reconstruct.loss.lambda_reg_per_pixel = 0.1;
    c.rain.streaks.n = {3, 9};
    c.enhancer.attention = enhance::AttentionMode::full;
    c.synth.views = 5;
    const json j = to_json(c);
    const RunConfig back = parse_run_config(j);
    CHECK(to_json(back) == j);
    CHECK(back.reconstruct.seed == 17);
    CHECK(parse_run_config(json::object()).reconstruct.iterations == ReconstructConfig{}.iterations);
}

TEST_CASE("run config rejects unknown keys, wrong types and bad values") {
    CHECK_THROWS_AS(parse_run_config({{"sede", 1}}), ValidationError);
    CHECK_THROWS_AS(parse_run_config({{"reconstruct", {{"iteratoins", 10}}}}), ValidationError);
    CHECK_THROWS_AS(parse_run_config({{"rain", {{"streaks", {{"len", {1, 2}}}}}}}), ValidationError);
    CHECK_THROWS_AS(parse_run_config({{"reconstruct", {{"iterations", "many"}}}}), ValidationError);
    CHECK_THROWS_AS(parse_run_config({{"loss", {{"lambda_reg_per_pixel", -1.0}}}}), ValidationError);
    CHECK_THROWS_AS(parse_run_config({{"rain", {{"streaks", {{"n", {30, 10}}}}}}}), ValidationError);
    CHECK_THROWS_AS(parse_run_config(json::array()), ValidationError);
    CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), ValidationError);
}

TEST_CASE("flatland config picks the flatland learning rates unless given") {
    const RunConfig a = parse_run_config({{"reconstruct", {{"flatland", true}}}});
    CHECK(a.reconstruct.lr.means == LearningRates::flatland_defaults().means);
    const RunConfig b = parse_run_config({{"reconstruct", {{"flatland", true}, {"lr", {{"means", 0.5}}}}}});
    CHECK(b.reconstruct.lr.means == 0.5);
}

// --- manifest --------------------------------------------------------------------

TEST_CASE("synthetic scene round-trips through a manifest") {
    TempDir dir("manifest_ok");
    SynthConfig sc;
    sc.views = 2;
    sc.height = sc.width = 24;
    const SyntheticScene scene = synth_3d_scene(light_rain(), sc);
    const SceneManifest m = write_scene(scene, light_rain(), dir.path.string());
    REQUIRE(m.views.size() == 2);
    CHECK_FALSE(m.flatland);
    CHECK(m.has_clean_images());
    REQUIRE(m.points);
    CHECK(load_points(*m.points).size() == scene.points.size());
    const auto views = load_training_views(m);
    CHECK(bit_equal(views[1].observed, io::quantize8(scene.rainy[1].image)));
    REQUIRE(views[1].camera);
    CHECK(views[1].camera->world_to_camera == scene.cameras[1]->world_to_camera);
    // Paths are stored relative to the manifest.
    const json raw = read_json(dir.file("manifest.json"));
    CHECK(raw["views"][0]["image"] == "rainy/000.png");
}

TEST_CASE("manifest errors name the problem") {
    TempDir dir("manifest_bad");
    io::write_png(dir.file("a.png"), Tensor(Shape{3, 8, 8}, 0.5));
    splat::Camera cam = splat::look_at({0, 0, -4}, {0, 0, 0}, {0, -1, 0}, 45.0, 8, 8);
    const json good_cam = camera_to_json(cam);
    auto view = [&](std::size_t i, const json& camera) {
        return json{{"view_index", i}, {"image", "a.png"}, {"camera", camera}};
    };
    auto expect_error = [&](const json& j, const std::string& fragment) {
        try {
            parse_manifest(j, dir.path.string());
            FAIL("accepted a manifest that should mention '" << fragment << "'");
        } catch (const ValidationError& e) {
            CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos, e.what());
        }
    };
    const json base{{"schema", kManifestSchema}, {"name", "t"}};

    json ok = base;
    ok["views"] = {view(0, good_cam), view(1, good_cam)};
    CHECK(parse_manifest(ok, dir.path.string()).views.size() == 2);

    json dup = base;
    dup["views"] = {view(0, good_cam), view(0, good_cam)};
    expect_error(dup, "duplicate");

    json gap = base;
    gap["views"] = {view(0, good_cam), view(2, good_cam)};
    expect_error(gap, "contiguous");

    json missing = base;
    missing["views"] = {view(0, good_cam)};
    missing["views"][0]["image"] = "nope.png";
    expect_error(missing, "nope.png");

    json reflected_cam = good_cam;
    for (int c = 0; c < 3; ++c) reflected_cam["world_to_camera"][c] = -reflected_cam["world_to_camera"][c].get<double>();
    json reflected = base;
    reflected["views"] = {view(0, reflected_cam)};
    expect_error(reflected, "reflection");

    json no_cam = base;
    no_cam["views"] = {json{{"view_index", 0}, {"image", "a.png"}}};
    expect_error(no_cam, "camera");
    no_cam["flatland"] = true;
    CHECK(parse_manifest(no_cam, dir.path.string()).flatland);

    json schema = ok;
    schema["schema"] = "something/2";
    expect_error(schema, "schema");
}

// --- metrics ---------------------------------------------------------------------

TEST_CASE("metrics of a perfect render and schema checks") {
    const Tensor img = rain::procedural_texture(3, 16, 16);
    const Metrics m = evaluate_renders("s", {img, img}, {img, img});
    CHECK(m.mean_psnr == 99.0);
    CHECK(m.mean_ssim == doctest::Approx(1.0));
    json j = metrics_to_json(m);
    CHECK_NOTHROW(validate_metrics_json(j));
    CHECK(j["views"][1]["lpips"] == "n/a");

    json extra = j;
    extra["mean"]["fid"] = 3.0;
    CHECK_THROWS_AS(validate_metrics_json(extra), ValidationError);
    json wrong_mean = j;
    wrong_mean["mean"]["psnr"] = 50.0;
    CHECK_THROWS_AS(validate_metrics_json(wrong_mean), ValidationError);
    json bad_index = j;
    bad_index["views"][1]["view_index"] = 7;
    CHECK_THROWS_AS(validate_metrics_json(bad_index), ValidationError);
    json bad_ssim = j;
    bad_ssim["views"][0]["ssim"] = 1.5;
    CHECK_THROWS_AS(validate_metrics_json(bad_ssim), ValidationError);
}

TEST_CASE("comparison grid layout") {
    const Tensor a(Shape{3, 4, 5}, 0.25);
    const Tensor m(Shape{1, 4, 5}, 0.75);
    const Tensor g = comparison_grid({{a, m}, {a, a}});
    REQUIRE(g.shape() == Shape{3, 4 * 2 + 2 * 3, 5 * 2 + 2 * 3});
    CHECK(g[0] == 1.0);                    // gutter
    CHECK(g[2 * g.size(2) + 2] == 0.25);   // first tile
    CHECK(g[2 * g.size(2) + 9] == 0.75);   // gray mask tile
}

// --- reconstruction -------------------------------------------------------------------

TEST_CASE("reconstruction is deterministic and honours the warm-up") {
    SynthConfig sc;
    sc.views = 3;
    sc.height = sc.width = 20;
    const auto scene = synth_flatland_scene(light_rain(), sc);
    const auto views = scene.training_views();
    ReconstructConfig cfg = quick_flatland(45);
    cfg.use_enhancer = false;
    const auto a = reconstruct(views, nullptr, cfg);
    const auto b = reconstruct(views, nullptr, cfg);
    NoGradScope ng;
    CHECK(bit_equal(a.scene.render(std::nullopt).color, b.scene.render(std::nullopt).color));
    REQUIRE(a.history.size() == 45);
    CHECK(a.iterations_done == 45);
    for (const auto& rec : a.history) {
        if (rec.iteration <= cfg.mask_warmup)
            CHECK(rec.mask_mean == 0.0);
        else
            CHECK(rec.mask_mean > 0.0);
    }
    cfg.seed = 1;
    const auto c = reconstruct(views, nullptr, cfg);
    CHECK_FALSE(bit_equal(a.scene.render(std::nullopt).color, c.scene.render(std::nullopt).color));
}

TEST_CASE("optimize continues from a finished state") {
    SynthConfig sc;
    sc.views = 1;
    sc.height = sc.width = 16;
    const auto views = synth_flatland_scene(light_rain(), sc).training_views();
    ReconstructConfig cfg = quick_flatland(30);
    cfg.use_enhancer = false;
    cfg.mask_warmup = 40;
    auto r = reconstruct(views, nullptr, cfg);
    optimize(r, views, cfg);
    CHECK(r.iterations_done == 60);
    CHECK(r.history.back().iteration == 60);
    // Iterations 31..40 are still inside the warm-up window.
    CHECK(r.history[39].mask_mean == 0.0);
    CHECK(r.history[40].mask_mean > 0.0);
}

TEST_CASE("reconstruction fits a clean image") {
    const Tensor target = rain::procedural_texture(8, 48, 48);
    ReconstructConfig cfg;
    cfg.flatland = true;
    cfg.iterations = 500;
    cfg.use_enhancer = false;
    cfg.use_mask = false;
    cfg.lr = LearningRates::flatland_defaults();
    const auto r = reconstruct({{0, target, std::nullopt}}, nullptr, cfg);
    NoGradScope ng;
    CHECK(loss::psnr(r.scene.render(std::nullopt).color, target) >= 28.0);
}

TEST_CASE("reconstruction validates its inputs") {
    const Tensor img = rain::procedural_texture(1, 12, 12);
    ReconstructConfig cfg = quick_flatland(5);
    CHECK_THROWS_AS(reconstruct({{0, img, std::nullopt}}, nullptr, cfg), ValidationError);  // enhancer missing
    cfg.use_enhancer = false;
    CHECK_THROWS_AS(reconstruct({}, nullptr, cfg), ValidationError);
    CHECK_THROWS_AS(reconstruct({{0, img, std::nullopt}, {1, Tensor(Shape{3, 10, 12}, 0.0), std::nullopt}}, nullptr,
                                cfg),
                    DimensionError);
    ReconstructConfig three_d = cfg;
    three_d.flatland = false;
    CHECK_THROWS_AS(reconstruct({{0, img, std::nullopt}}, nullptr, three_d), ValidationError);  // no camera
}

TEST_CASE("checkpoint round trip restores renders, masks and progress") {
    TempDir dir("ckpt");
    SynthConfig sc;
    sc.views = 2;
    sc.height = sc.width = 16;
    const auto views = synth_flatland_scene(light_rain(), sc).training_views();
    RunConfig rc;
    rc.reconstruct = quick_flatland(12);
    rc.reconstruct.use_enhancer = false;
    rc.reconstruct.mask_warmup = 4;
    rc.finalize();
    const auto r = reconstruct(views, nullptr, rc.reconstruct);
    save_reconstruction(dir.file("c.drs"), r, rc);
    const Checkpoint ck = load_reconstruction(dir.file("c.drs"));
    NoGradScope ng;
    CHECK(bit_equal(ck.result.scene.render(std::nullopt).color, r.scene.render(std::nullopt).color));
    CHECK(bit_equal(predict_mask(ck.result, 1), predict_mask(r, 1)));
    CHECK(ck.result.iterations_done == 12);
    CHECK(to_json(ck.config) == to_json(rc));
    CHECK_THROWS_AS(load_enhancer(dir.file("c.drs")), ValidationError);
}

// --- commands ----------------------------------------------------------------------------

TEST_CASE("reconstruct never reads clean images") {
    TempDir dir("audit");
    write_json(dir.file("config.json"), quick_config_json());
    CommandOptions o;
    o.config = dir.file("config.json");
    o.flatland = true;
    o.quiet = true;
    o.out = dir.file("scene");
    REQUIRE(run_synth(o) == 0);

    std::vector<std::string> reads;
    io::set_read_observer([&](const std::string& p) { reads.push_back(p); });
    o.manifest = dir.file("scene/manifest.json");
    o.out = dir.file("run");
    o.no_enhance = true;
    o.dump_masks = true;
    const int rc = run_reconstruct(o);
    io::set_read_observer({});
    CHECK(rc == 0);
    CHECK(reads.size() == 2);
    for (const auto& p : reads) CHECK_MESSAGE(p.find("/clean/") == std::string::npos, p);
    for (const char* f : {"checkpoint.drs", "loss.csv", "config.json", "renders/000.png", "masks/001.png"})
        CHECK_MESSAGE(fs::exists(dir.file(std::string("run/") + f)), f);

    // eval is the one command allowed to read them.
    CommandOptions e = o;
    e.checkpoint = dir.file("run/checkpoint.drs");
    e.out = dir.file("eval");
    CHECK(run_eval(e) == 0);
    CHECK_NOTHROW(validate_metrics_json(read_json(dir.file("eval/metrics.json"))));

    // An empty selection renders nothing and succeeds.
    CommandOptions r;
    r.checkpoint = e.checkpoint;
    r.out = dir.file("render");
    r.quiet = true;
    CHECK(run_render(r) == 0);
    CHECK_FALSE(fs::exists(dir.file("render/renders")));
    r.manifest = o.manifest;
    r.views = {1};
    CHECK(run_render(r) == 0);
    CHECK(fs::exists(dir.file("render/renders/001.png")));
    CHECK_FALSE(fs::exists(dir.file("render/renders/000.png")));
    r.views = {5};
    CHECK_THROWS_AS(run_render(r), ValidationError);
}

TEST_CASE("reconstruct requires weights unless enhancement is off") {
    TempDir dir("weights");
    write_json(dir.file("config.json"), quick_config_json());
    CommandOptions o;
    o.config = dir.file("config.json");
    o.flatland = true;
    o.quiet = true;
    o.out = dir.file("scene");
    run_synth(o);
    o.manifest = dir.file("scene/manifest.json");
    CHECK_THROWS_AS(run_reconstruct(o), ValidationError);
    o.flatland = false;
    o.no_enhance = true;
    CHECK_THROWS_AS(run_reconstruct(o), ValidationError);  // flatland manifest, 3D config
}

TEST_CASE("divergence exits 3 and keeps the last good checkpoint") {
    TempDir dir("diverge");
    json cfg = quick_config_json();
    cfg["reconstruct"]["lr"] = {{"means", 1e300}, {"scaling", 1e300}, {"sh", 1e300}, {"opacity", 1e300},
                                {"rotation", 1e300}, {"mask", 1e300}};
    write_json(dir.file("config.json"), cfg);
    CommandOptions o;
    o.config = dir.file("config.json");
    o.flatland = true;
    o.quiet = true;
    o.out = dir.file("scene");
    run_synth(o);
    o.manifest = dir.file("scene/manifest.json");
    o.out = dir.file("run");
    o.no_enhance = true;
    CHECK_THROWS_AS(run_reconstruct(o), NumericalError);
    CHECK(fs::exists(dir.file("run/checkpoint.drs")));
    const std::string cli = std::string(DRS_CLI_PATH) + " --flatland -q --config " + dir.file("config.json") +
                            " -o " + dir.file("run2") + " reconstruct --no-enhance --manifest " + o.manifest;
    CHECK(exit_code(cli) == 3);
}

TEST_CASE("CLI exit codes") {
    TempDir dir("cli");
    write_json(dir.file("config.json"), quick_config_json());
    const std::string cli = std::string(DRS_CLI_PATH) + " -q --config " + dir.file("config.json");
    CHECK(exit_code(cli) == 2);
    CHECK(exit_code(cli + " frobnicate") == 2);
    CHECK(exit_code(cli + " --flatland -o " + dir.file("s") + " synth") == 0);
    const std::string manifest = dir.file("s/manifest.json");
    CHECK(exit_code(cli + " --flatland -o " + dir.file("r") + " reconstruct --manifest " + manifest) == 2);
    CHECK(exit_code(cli + " -o " + dir.file("r") + " reconstruct --no-enhance --manifest " + manifest) == 2);
    CHECK(exit_code(cli + " --flatland -o " + dir.file("r") + " reconstruct --no-enhance --manifest " + manifest) ==
          0);
    CHECK(exit_code(cli + " -o " + dir.file("v") + " render --checkpoint " + dir.file("r/checkpoint.drs")) == 0);
    CHECK(exit_code(cli + " -o " + dir.file("v") + " render --checkpoint " + dir.file("r/checkpoint.drs") +
                    " --manifest " + manifest + " --views 0,7") == 2);
    CHECK(exit_code(cli + " -o " + dir.file("e") + " eval --checkpoint " + dir.file("r/checkpoint.drs") +
                    " --manifest " + manifest) == 0);
    CHECK(exit_code(cli + " -o " + dir.file("e") + " eval --checkpoint " + manifest + " --manifest " + manifest) ==
          2);
    CHECK(exit_code(cli + " --help") == 0);
}
