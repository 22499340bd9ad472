#include "dmads/train.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

#include "dmads/checkpoint.hpp"
#include "dmads/error.hpp"
#include "dmads/loss.hpp"
#include "dmads/rng.hpp"
#include "dmads/tape.hpp"

namespace dmads {

namespace {

using json = nlohmann::json;

class Log {
public:
    Log(const std::filesystem::path& path, std::vector<std::string>& lines) : lines_(lines) {
        if (!path.empty()) {
            file_.open(path, std::ios::trunc);
            if (!file_) throw DataError("cannot open training log '" + path.string() + "'");
        }
    }

    void write(const json& record) {
        lines_.push_back(record.dump());
        if (file_.is_open()) file_ << lines_.back() << '\n' << std::flush;
    }

private:
    std::vector<std::string>& lines_;
    std::ofstream file_;
};

}  // namespace

Tensor<float> predict_logits(const nn::DmadsNet<float>& net, const Tensor<float>& images) {
    NoGradScope<float> no_grad;
    return net.forward(images).final_map;
}

MetricsReport evaluate(const nn::DmadsNet<float>& net, std::span<const Sample> samples) {
    std::vector<SampleMetrics> rows;
    rows.reserve(samples.size());
    for (const Sample& s : samples) {
        const Tensor<float> logits = predict_logits(net, s.image);
        rows.push_back(
            compute_metrics(BinaryMask::from_logits(logits), BinaryMask::from_binary(s.mask), s.id));
    }
    return summarize(std::move(rows));
}

TrainResult train(nn::DmadsNet<float>& net, std::span<const Sample> train_set, std::span<const Sample> val_set,
                  const TrainOptions& options, const EpochCallback& on_epoch) {
    if (train_set.empty()) throw DataError("train: the training split is empty");
    if (val_set.empty()) throw DataError("train: the validation split is empty");
    if (options.batch_size == 0) throw ConfigError("train: batch_size must be positive");

    const nn::ModelConfig& cfg = net.config();
    const auto theta = static_cast<float>(cfg.theta);
    Adam<float> adam(net.parameters(), options.adam);
    EarlyStopping schedule(options.schedule);
    Rng rng(options.seed);

    TrainResult result;
    Log log(options.log_path, result.log);
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    bool stop = false;
    for (std::size_t epoch = 1; !stop; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        EpochSummary summary;
        summary.epoch = epoch;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            if (options.max_steps != 0 && adam.steps() >= options.max_steps) break;
            const std::size_t end = std::min(order.size(), start + options.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            const Tensor<float> images = stack_images(train_set, idx);
            const Tensor<float> masks = stack_masks(train_set, idx);

            net.parameters().zero_grad();
            Tape<float> tape;
            LossBreakdown<float> loss;
            {
                TapeScope<float> scope(tape);
                loss = deep_supervised_loss(net.forward(images), masks, theta, cfg.loss);
            }
            const float total = loss.total.item();
            if (!std::isfinite(total)) {
                throw NumericalError("train: non-finite loss " + std::to_string(total) + " at epoch " +
                                     std::to_string(epoch) + ", step " + std::to_string(adam.steps() + 1));
            }
            tape.backward(loss.total);
            adam.step();
            summary.loss += total;
            summary.final_loss += loss.final_loss;
            summary.deep_loss += loss.deep_sum;
            ++batches;
        }
        if (batches > 0) {
            summary.loss /= static_cast<double>(batches);
            summary.final_loss /= static_cast<double>(batches);
            summary.deep_loss /= static_cast<double>(batches);
        }
        summary.steps = adam.steps();
        result.epochs = epoch;
        result.steps = adam.steps();
        log.write({{"event", "epoch"},
                   {"epoch", epoch},
                   {"step", summary.steps},
                   {"loss", summary.loss},
                   {"final_loss", summary.final_loss},
                   {"deep_loss", summary.deep_loss}});

        const bool step_cap = options.max_steps != 0 && adam.steps() >= options.max_steps;
        const bool due = schedule.end_epoch(epoch);
        // The last epoch before a step cap is validated too, so the log ends on
        // a measured state.
        if (due || step_cap) {
            summary.validated = true;
            summary.validation = evaluate(net, val_set);
            const bool improved = schedule.report(summary.validation.dice);
            if (improved) {
                result.best_dice = schedule.best();
                result.best_epoch = epoch;
                if (!options.checkpoint_path.empty()) {
                    save_checkpoint(options.checkpoint_path, net.parameters(), cfg);
                }
            }
            log.write({{"event", "validation"},
                       {"epoch", epoch},
                       {"step", summary.steps},
                       {"dice", summary.validation.dice},
                       {"iou", summary.validation.iou},
                       {"precision", summary.validation.precision},
                       {"recall", summary.validation.recall},
                       {"improved", improved},
                       {"epochs_since_best", schedule.epochs_since_best()}});
        }
        if (on_epoch) on_epoch(summary);

        if (summary.validated && options.stop_at_dice > 0.0 && summary.validation.dice >= options.stop_at_dice) {
            result.stop_reason = "target_dice";
        } else if (step_cap) {
            result.stop_reason = "max_steps";
        } else if (schedule.should_stop()) {
            result.stop_reason = epoch >= options.schedule.max_epochs ? "max_epochs" : "patience";
        }
        stop = !result.stop_reason.empty();
    }
    log.write({{"event", "stop"},
               {"reason", result.stop_reason},
               {"epoch", result.epochs},
               {"step", result.steps},
               {"best_dice", result.best_dice},
               {"best_epoch", result.best_epoch}});
    return result;
}

}  // namespace dmads
