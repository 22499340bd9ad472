#include "dmads/config.hpp"

#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "dmads/error.hpp"

namespace dmads {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw ConfigError("config: " + key + " = '" + value + "' is not a non-negative integer");
    }
    return v;
}

double to_double(const std::string& key, const std::string& value) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (value.empty() || end != value.c_str() + value.size() || errno == ERANGE) {
        throw ConfigError("config: " + key + " = '" + value + "' is not a number");
    }
    return v;
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("config: " + key + " = '" + value + "' is not a boolean");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    if (value.empty()) return out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_u64(key, trim(item)));
    return out;
}

ResizeMode to_resize(const std::string& key, const std::string& value) {
    if (value == "bilinear") return ResizeMode::bilinear;
    if (value == "nearest") return ResizeMode::nearest;
    throw ConfigError("config: " + key + " = '" + value + "' must be bilinear or nearest");
}

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// Applies one model key; false when the key is not a model key.
bool apply_model_key(nn::ModelConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "image_size") cfg.image_size = to_u64(key, value);
    else if (key == "image_channels") cfg.image_channels = to_u64(key, value);
    else if (key == "base_channels") {
        const std::size_t c = to_u64(key, value);
        cfg.stage_channels = {c, 2 * c, 4 * c};
    }
    else if (key == "width_multiplier") cfg.width_multiplier = to_double(key, value);
    else if (key == "patch_ratios") cfg.patch_ratios = to_list(key, value);
    else if (key == "skip_wiring") cfg.skip_wiring = nn::parse_wiring(value);
    else if (key == "upsample") cfg.upsample = to_resize(key, value);
    else if (key == "disable_mscfa") cfg.disable_mscfa = to_bool(key, value);
    else if (key == "disable_frfb") cfg.disable_frfb = to_bool(key, value);
    else if (key == "disable_lfa") cfg.disable_lfa = to_bool(key, value);
    else if (key == "disable_deep_supervision") cfg.disable_deep_supervision = to_bool(key, value);
    else if (key == "single_backbone_r18") cfg.single_backbone_r18 = to_bool(key, value);
    else if (key == "theta") cfg.theta = to_double(key, value);
    else if (key == "loss") cfg.loss = nn::parse_loss(value);
    else if (key == "seed") cfg.seed = to_u64(key, value);
    else return false;
    return true;
}

fs::path resolve(const fs::path& base, const std::string& value) {
    const fs::path p(value);
    return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& origin) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = origin + ":" + std::to_string(lineno);
        if (eq == std::string::npos) {
            throw ConfigError(where + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) {
            throw ConfigError(where + ": empty key");
        }
        if (!out.emplace(key, trim(line.substr(eq + 1))).second) {
            throw ConfigError(where + ": key '" + key + "' appears twice");
        }
    }
    return out;
}

std::string model_config_text(const nn::ModelConfig& cfg) {
    std::ostringstream os;
    os << "image_size=" << cfg.image_size << "\n";
    os << "image_channels=" << cfg.image_channels << "\n";
    os << "base_channels=" << cfg.stage_channels[0] << "\n";
    os << "width_multiplier=" << format_double(cfg.width_multiplier) << "\n";
    os << "patch_ratios=";
    for (std::size_t i = 0; i < cfg.patch_ratios.size(); ++i) os << (i ? "," : "") << cfg.patch_ratios[i];
    os << "\n";
    os << "skip_wiring=" << nn::wiring_name(cfg.skip_wiring) << "\n";
    os << "upsample=" << (cfg.upsample == ResizeMode::bilinear ? "bilinear" : "nearest") << "\n";
    os << "disable_mscfa=" << (cfg.disable_mscfa ? "true" : "false") << "\n";
    os << "disable_frfb=" << (cfg.disable_frfb ? "true" : "false") << "\n";
    os << "disable_lfa=" << (cfg.disable_lfa ? "true" : "false") << "\n";
    os << "disable_deep_supervision=" << (cfg.disable_deep_supervision ? "true" : "false") << "\n";
    os << "single_backbone_r18=" << (cfg.single_backbone_r18 ? "true" : "false") << "\n";
    os << "theta=" << format_double(cfg.theta) << "\n";
    os << "loss=" << nn::loss_name(cfg.loss) << "\n";
    os << "seed=" << cfg.seed << "\n";
    return os.str();
}

nn::ModelConfig parse_model_config(const std::string& text) {
    nn::ModelConfig cfg;
    for (const auto& [key, value] : parse_key_values(text, "model config")) {
        if (!apply_model_key(cfg, key, value)) {
            throw ConfigError("model config: unknown key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir) {
    RunConfig rc;
    bool have_data = false;
    for (const auto& [key, value] : parse_key_values(text, "run config")) {
        if (apply_model_key(rc.model, key, value)) continue;
        TrainOptions& t = rc.train;
        if (key == "lr") t.adam.lr = to_double(key, value);
        else if (key == "batch_size") t.batch_size = to_u64(key, value);
        else if (key == "max_epochs") t.schedule.max_epochs = to_u64(key, value);
        else if (key == "eval_every") t.schedule.eval_every = to_u64(key, value);
        else if (key == "patience") t.schedule.patience = to_u64(key, value);
        else if (key == "max_steps") t.max_steps = to_u64(key, value);
        else if (key == "stop_at_dice") t.stop_at_dice = to_double(key, value);
        else if (key == "data_dir") {
            rc.data_dir = resolve(base_dir, value);
            have_data = !value.empty();
        }
        else if (key == "out_dir") rc.out_dir = resolve(base_dir, value);
        else throw ConfigError("run config: unknown key '" + key + "'");
    }
    if (!have_data) {
        throw ConfigError("run config: data_dir is required");
    }
    if (rc.train.batch_size == 0) {
        throw ConfigError("run config: batch_size must be positive");
    }
    if (rc.train.schedule.max_epochs == 0 || rc.train.schedule.eval_every == 0) {
        throw ConfigError("run config: max_epochs and eval_every must be positive");
    }
    if (!(rc.train.adam.lr > 0.0)) {
        throw ConfigError("run config: lr must be positive");
    }
    rc.train.seed = rc.model.seed;
    rc.model.validate();
    return rc;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config '" + path.string() + "'");
    }
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_run_config(text, path.parent_path());
}

}  // namespace dmads
