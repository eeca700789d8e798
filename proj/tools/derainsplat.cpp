// derainsplat command-line front end.
//
// Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
// divergence, 1 anything else.

#include "derainsplat/common/error.hpp"
#include "derainsplat/pipeline/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace drs;
using namespace drs::pipeline;

int main(int argc, char** argv) {
    CLI::App app{"Rain-robust Gaussian splatting: synthesis, enhancement, reconstruction and evaluation"};
    app.require_subcommand(1);
    CommandOptions o;
    app.add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) {
                                               o.seed = s;
                                               o.seed_set = true;
                                           },
                                           "Seed overriding the config");
    app.add_flag("--flatland", o.flatland, "Image-plane splats instead of 3D Gaussians");
    app.add_flag("-q,--quiet", o.quiet, "Suppress progress output");
    app.add_option("-o,--out", o.out, "Output directory (overrides output_dir)");

    auto* synth = app.add_subcommand("synth", "Write a synthetic rainy scene (or enhancer pairs) to disk");
    synth->add_flag("--pairs", o.pairs, "Write training pairs instead of a scene");

    auto* train = app.add_subcommand("train-enhancer", "Train the enhancement network on paired data");
    train->add_option("--data", o.data, "pairs.json (default: synthesize pairs in memory)")->check(CLI::ExistingFile);
    train->add_option("--weights", o.weights, "Output weights file (default <out>/enhancer.drs)");

    auto* enh = app.add_subcommand("enhance", "Run a trained enhancer on every view of a manifest");
    enh->add_option("--weights", o.weights, "Enhancer weights")->required()->check(CLI::ExistingFile);
    enh->add_option("--manifest", o.manifest, "Scene manifest")->required();

    auto* rec = app.add_subcommand("reconstruct", "Fit a splat scene to the rainy views");
    rec->add_option("--manifest", o.manifest, "Scene manifest")->required();
    rec->add_option("--weights", o.weights, "Frozen enhancer weights");
    rec->add_flag("--no-enhance", o.no_enhance, "Fit the raw rainy views");
    rec->add_flag("--no-mask", o.no_mask, "Disable the occlusion mask");
    rec->add_flag("--no-chan-attn", o.no_chan_attn, "Disable frequency channel attention in the mask predictor");
    rec->add_flag("--dump-masks", o.dump_masks, "Write the final per-view masks");

    auto* ren = app.add_subcommand("render", "Render views from a checkpoint");
    ren->add_option("--checkpoint", o.checkpoint, "Reconstruction checkpoint")->required()->check(CLI::ExistingFile);
    ren->add_option("--manifest", o.manifest, "Manifest supplying training cameras");
    ren->add_option("--views", o.views, "View indices to render")->delimiter(',');
    ren->add_flag("--all", o.all_views, "Render every manifest view");
    ren->add_option("--camera", o.camera, "JSON camera or array of cameras for novel views")
        ->check(CLI::ExistingFile);

    auto* ev = app.add_subcommand("eval", "PSNR/SSIM of renders against clean images");
    ev->add_option("--checkpoint", o.checkpoint, "Reconstruction checkpoint")->required()->check(CLI::ExistingFile);
    ev->add_option("--manifest", o.manifest, "Manifest with clean_image entries")->required();

    auto* rep = app.add_subcommand("report", "Side-by-side comparison grid");
    rep->add_option("--checkpoint", o.checkpoint, "Reconstruction checkpoint")->required()->check(CLI::ExistingFile);
    rep->add_option("--manifest", o.manifest, "Scene manifest")->required();
    rep->add_option("--views", o.views, "View indices (default all)")->delimiter(',');

    for (auto* sub : {synth, train, enh, rec, ren, ev, rep}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return run_synth(o);
        if (train->parsed()) return run_train_enhancer(o);
        if (enh->parsed()) return run_enhance(o);
        if (rec->parsed()) return run_reconstruct(o);
        if (ren->parsed()) return run_render(o);
        if (ev->parsed()) return run_eval(o);
        if (rep->parsed()) return run_report(o);
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
