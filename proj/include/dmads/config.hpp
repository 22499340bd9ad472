#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "dmads/model.hpp"
#include "dmads/train.hpp"

namespace dmads {

// Flat key=value file: one pair per line, '#' starts a comment, blank lines
// are ignored. Unknown or repeated keys are ConfigErrors naming the line.
std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& origin);

// Every ModelConfig field as key=value lines; round-trips through
// parse_model_config.
std::string model_config_text(const nn::ModelConfig& cfg);
nn::ModelConfig parse_model_config(const std::string& text);

struct RunConfig {
    nn::ModelConfig model;
    TrainOptions train;
    std::filesystem::path data_dir;  // required
    std::filesystem::path out_dir = "runs";
};

// Keys: the model keys (image_size, width_multiplier, loss, theta, seed,
// skip_wiring, upsample, patch_ratios, disable_*, single_backbone_r18) plus
// lr, batch_size, max_epochs, eval_every, patience, max_steps, stop_at_dice,
// data_dir, out_dir. Relative paths resolve against base_dir.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace dmads
