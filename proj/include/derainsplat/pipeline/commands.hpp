#pragma once

// The CLI commands as library functions, so tests can drive them in-process.
// Each returns the process exit code for success (0) and throws
// ValidationError / DimensionError (exit 2) or NumericalError (exit 3).

#include "derainsplat/pipeline/config.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace drs::pipeline {

struct CommandOptions {
    std::string config;  // JSON run config; empty for defaults
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;  // overrides output_dir
    std::string manifest;
    std::string weights;     // enhancer checkpoint
    std::string checkpoint;  // reconstruction checkpoint
    std::string data;        // pairs.json for train-enhancer
    std::string camera;      // JSON camera(s) for novel-view renders
    std::vector<std::size_t> views;
    bool all_views = false;
    bool flatland = false;
    bool no_enhance = false;
    bool no_mask = false;
    bool no_chan_attn = false;
    bool dump_masks = false;
    bool pairs = false;
    bool quiet = false;
};

/// Config file plus flag overrides; flags act exactly like the matching keys.
RunConfig resolve_config(const CommandOptions& o);

/// Scene (or with `pairs`, enhancer training pairs) into output_dir.
int run_synth(const CommandOptions& o);
/// Trains on `data` (or synthesized pairs), last 10% held out; writes weights.
int run_train_enhancer(const CommandOptions& o);
/// Enhanced copies of every manifest view under <out>/enhanced.
int run_enhance(const CommandOptions& o);
/// checkpoint.drs, loss.csv, config.json, renders/ and with dump_masks masks/.
/// On divergence the last good state is saved before rethrowing.
int run_reconstruct(const CommandOptions& o);
/// Selected manifest views into <out>/renders, novel cameras into <out>/novel.
int run_render(const CommandOptions& o);
/// metrics.json against the manifest's clean images.
int run_eval(const CommandOptions& o);
/// report.png: rainy | target | render | mask | clean per selected view
/// (all views when none are selected).
int run_report(const CommandOptions& o);

}  // namespace drs::pipeline
