#include "dmads/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "dmads/checkpoint.hpp"
#include "dmads/config.hpp"
#include "dmads/dataset.hpp"
#include "dmads/error.hpp"
#include "dmads/image.hpp"
#include "dmads/metrics.hpp"
#include "dmads/train.hpp"

namespace dmads {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kReportVersion = 1;

std::map<std::string, fs::path> pngs_by_stem(const fs::path& dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw DataError("'" + dir.string() + "' is not a directory");
    std::map<std::string, fs::path> files;
    for (const fs::directory_entry& e : fs::directory_iterator(dir)) {
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (e.is_regular_file() && ext == ".png") files.emplace(e.path().stem().string(), e.path());
    }
    return files;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << text;
        if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw DataError("cannot move '" + tmp.string() + "' into place: " + ec.message());
}

BinaryMask read_mask(const fs::path& path) {
    return threshold_mask(read_png(path));
}

// Thresholded prediction at the network resolution, resized back to the
// source size.
Image8 segment(const nn::DmadsNet<float>& net, const Image8& source) {
    const nn::ModelConfig& cfg = net.config();
    const Image8 input = resize_image(source, cfg.image_size, cfg.image_size, ResizeMode::bilinear);
    const Tensor<float> logits = predict_logits(net, image_tensor(input, cfg.image_channels));
    const Image8 mask = to_image(BinaryMask::from_logits(logits));
    return resize_image(mask, source.height, source.width, ResizeMode::nearest);
}

int cmd_train(const fs::path& config_path, std::size_t max_steps, std::ostream& out) {
    RunConfig rc = load_run_config(config_path);
    if (max_steps != 0) rc.train.max_steps = max_steps;
    fs::create_directories(rc.out_dir);
    const Dataset data = load_dataset(rc.data_dir, rc.model.image_size, rc.model.seed, rc.model.image_channels);
    nn::DmadsNet<float> net(rc.model);
    TrainOptions opts = rc.train;
    opts.log_path = rc.out_dir / "train_log.jsonl";
    opts.checkpoint_path = rc.out_dir / "best.ckpt";
    const TrainResult r = train(net, data.train, data.val, opts);
    if (!fs::exists(opts.checkpoint_path)) {
        save_checkpoint(opts.checkpoint_path, net.parameters(), net.config());
    }
    out << "trained " << r.epochs << " epochs, " << r.steps << " steps (" << data.train.size() << " train / "
        << data.val.size() << " val); stop: " << r.stop_reason << "; best val dice " << r.best_dice << " at epoch "
        << r.best_epoch << "\n";
    out << "checkpoint: " << opts.checkpoint_path.string() << "\n";
    return kExitOk;
}

int cmd_infer(const fs::path& ckpt, const fs::path& input, const fs::path& output, std::ostream& out) {
    const nn::DmadsNet<float> net = load_model(ckpt);
    if (fs::is_directory(input)) {
        fs::create_directories(output);
        std::size_t n = 0;
        for (const auto& [stem, path] : pngs_by_stem(input)) {
            write_png(output / (stem + ".png"), segment(net, read_png(path)));
            ++n;
        }
        if (n == 0) throw DataError("no PNG files in '" + input.string() + "'");
        out << "wrote " << n << " masks to " << output.string() << "\n";
    } else {
        write_png(output, segment(net, read_png(input)));
        out << "wrote " << output.string() << "\n";
    }
    return kExitOk;
}

json metrics_json(const SampleMetrics& m) {
    return {{"id", m.id},
            {"tp", m.counts.tp},
            {"fp", m.counts.fp},
            {"fn", m.counts.fn},
            {"tn", m.counts.tn},
            {"dice", m.dice},
            {"iou", m.iou},
            {"precision", m.precision},
            {"recall", m.recall}};
}

int cmd_eval(const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& report, std::ostream& out) {
    const auto gts = pngs_by_stem(gt_dir);
    const auto preds = pngs_by_stem(pred_dir);
    if (gts.empty()) throw DataError("no ground-truth PNG files in '" + gt_dir.string() + "'");
    std::vector<SampleMetrics> rows;
    for (const auto& [stem, gt_path] : gts) {
        const auto it = preds.find(stem);
        if (it == preds.end()) throw DataError("no prediction for ground truth '" + stem + "'");
        rows.push_back(compute_metrics(read_mask(it->second), read_mask(gt_path), stem));
    }
    const MetricsReport r = summarize(std::move(rows));
    json doc;
    doc["schema"] = "dmads.eval";
    doc["version"] = kReportVersion;
    doc["threshold"] = 128;
    doc["comparable_to_published"] = false;
    doc["note"] = "local split and preprocessing; not comparable to published benchmark tables";
    doc["samples"] = json::array();
    for (const SampleMetrics& m : r.samples) doc["samples"].push_back(metrics_json(m));
    doc["mean"] = {{"dice", r.dice}, {"iou", r.iou}, {"precision", r.precision}, {"recall", r.recall}};
    doc["count"] = r.samples.size();
    write_text_atomic(report, doc.dump(2) + "\n");
    out << "evaluated " << r.samples.size() << " masks: dice " << r.dice << ", iou " << r.iou << ", precision "
        << r.precision << ", recall " << r.recall << "\n";
    return kExitOk;
}

int cmd_overlay(const fs::path& pred, const fs::path& gt, const fs::path& image, const fs::path& output,
                std::ostream& out) {
    const BinaryMask p = read_mask(pred);
    const BinaryMask g = read_mask(gt);
    RgbImage base;
    if (!image.empty()) base = to_rgb(read_png(image));
    const RgbImage overlay = render_overlay(p, g, image.empty() ? nullptr : &base);
    write_png(output, to_image(overlay));
    const ConfusionCounts c = confusion(p, g);
    out << "wrote " << output.string() << " (red " << c.fp << ", green " << c.fn << ", white " << c.tp << ")\n";
    return kExitOk;
}

int cmd_inspect(const fs::path& ckpt, std::size_t image_size, double width, std::ostream& out) {
    nn::ModelConfig cfg;
    std::uint64_t params = 0;
    if (!ckpt.empty()) {
        const Checkpoint c = read_checkpoint(ckpt);
        cfg = c.config();
        nn::DmadsNet<float> net(cfg);
        load_parameters(c, net.parameters(), cfg);
        params = count_parameters(net.parameters());
        out << "checkpoint: " << ckpt.string() << " (format version " << c.version << ")\n";
    } else {
        if (image_size != 0) cfg.image_size = image_size;
        if (width > 0.0) cfg.width_multiplier = width;
        params = nn::estimate_parameters(cfg);
    }
    const auto ch = cfg.channels();
    char digest[32];
    std::snprintf(digest, sizeof(digest), "%016llx", static_cast<unsigned long long>(cfg.digest()));
    out << "config digest: " << digest << "\n";
    out << "input: " << cfg.image_channels << "x" << cfg.image_size << "x" << cfg.image_size << ", stage channels "
        << ch[0] << "/" << ch[1] << "/" << ch[2] << "\n";
    char line[128];
    std::snprintf(line, sizeof(line), "parameters: %llu (%.2fM)\n", static_cast<unsigned long long>(params),
                  static_cast<double>(params) / 1e6);
    out << line;
    const double macs = static_cast<double>(nn::estimate_macs(cfg));
    std::snprintf(line, sizeof(line), "multiply-accumulates: %.2f GMac per image\n", macs / 1e9);
    out << line;
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"DmADs-Net segmentation: train, infer, evaluate and inspect", "dmads"};
    app.require_subcommand(1);

    fs::path train_config;
    std::size_t max_steps = 0;
    CLI::App* train_cmd = app.add_subcommand("train", "train a model from a key=value run config");
    train_cmd->add_option("--config", train_config, "run configuration file")->required();
    train_cmd->add_option("--max-steps", max_steps, "cap on optimizer steps (overrides the config)");

    fs::path ckpt, input, output;
    CLI::App* infer_cmd = app.add_subcommand("infer", "write binary masks (0/255) for an image or a directory");
    infer_cmd->add_option("--ckpt", ckpt, "checkpoint")->required();
    infer_cmd->add_option("--input", input, "PNG image or directory of PNGs")->required();
    infer_cmd->add_option("--output", output, "output PNG or directory")->required();

    fs::path pred_dir, gt_dir, report;
    CLI::App* eval_cmd = app.add_subcommand("eval", "score predicted masks against ground truth");
    eval_cmd->add_option("--pred-dir", pred_dir, "predicted masks")->required();
    eval_cmd->add_option("--gt-dir", gt_dir, "ground-truth masks")->required();
    eval_cmd->add_option("--report", report, "JSON report path")->required();

    fs::path pred, gt, image, overlay_out;
    CLI::App* overlay_cmd = app.add_subcommand("overlay", "render FP red / FN green / TP white");
    overlay_cmd->add_option("--pred", pred, "predicted mask")->required();
    overlay_cmd->add_option("--gt", gt, "ground-truth mask")->required();
    overlay_cmd->add_option("--image", image, "optional base image shown under true negatives");
    overlay_cmd->add_option("--out", overlay_out, "output PNG")->required();

    fs::path synth_dir;
    std::size_t synth_count = 8, synth_size = 64;
    std::uint64_t synth_seed = 0;
    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic ellipse dataset");
    synth_cmd->add_option("--out", synth_dir, "dataset directory")->required();
    synth_cmd->add_option("--count", synth_count, "number of image/mask pairs");
    synth_cmd->add_option("--size", synth_size, "side length, a multiple of 4");
    synth_cmd->add_option("--seed", synth_seed, "generator seed");

    fs::path inspect_ckpt;
    std::size_t inspect_size = 0;
    double inspect_width = 0.0;
    CLI::App* inspect_cmd = app.add_subcommand("inspect", "report parameter count and multiply-accumulates");
    inspect_cmd->add_option("--ckpt", inspect_ckpt, "checkpoint (default: the default configuration)");
    inspect_cmd->add_option("--image-size", inspect_size, "input size when no checkpoint is given");
    inspect_cmd->add_option("--width", inspect_width, "width multiplier when no checkpoint is given");

    std::vector<const char*> argv;
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        std::ostringstream msg;
        const int code = app.exit(e, out, msg);
        if (!msg.str().empty()) err << "dmads: " << msg.str();
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*train_cmd) return cmd_train(train_config, max_steps, out);
        if (*infer_cmd) return cmd_infer(ckpt, input, output, out);
        if (*eval_cmd) return cmd_eval(pred_dir, gt_dir, report, out);
        if (*overlay_cmd) return cmd_overlay(pred, gt, image, overlay_out, out);
        if (*synth_cmd) {
            generate_synthetic(synth_dir, synth_count, synth_size, synth_seed);
            out << "wrote " << synth_count << " pairs to " << synth_dir.string() << "\n";
            return kExitOk;
        }
        if (*inspect_cmd) return cmd_inspect(inspect_ckpt, inspect_size, inspect_width, out);
    } catch (const ConfigError& e) {
        err << "dmads: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericalError& e) {
        err << "dmads: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const AutodiffError& e) {
        err << "dmads: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const Error& e) {
        err << "dmads: " << e.what() << "\n";
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        err << "dmads: " << e.what() << "\n";
        return kExitData;
    }
    err << "dmads: no subcommand\n";
    return kExitUsage;
}

}  // namespace dmads
