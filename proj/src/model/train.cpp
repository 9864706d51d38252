#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "mrsgen/model.hpp"

namespace mrsgen::model {

namespace {

double corpus_loss(const Seq2Seq& model, const std::vector<corpus::Batch>& batches) {
  double weighted = 0.0;
  long long tokens = 0;
  for (const corpus::Batch& batch : batches) {
    long long n = 0;
    for (int len : batch.tgt_lengths) n += len;
    weighted += model.loss(batch) * static_cast<double>(n);
    tokens += n;
  }
  return tokens > 0 ? weighted / static_cast<double>(tokens) : 0.0;
}

}  // namespace

TrainResult train(Seq2Seq& model,
                  const std::vector<preprocess::ProcessedExample>& train_set,
                  const std::vector<preprocess::ProcessedExample>& dev_set,
                  const TrainOptions& options) {
  if (train_set.empty()) throw std::invalid_argument("empty training corpus");
  const Hyperparams& hp = model.hyperparams();
  const corpus::Vocabulary& vocab = model.vocabulary();

  std::vector<corpus::Batch> dev_batches;
  if (!dev_set.empty()) {
    dev_batches = corpus::make_batches(dev_set, vocab, hp.batch_size, hp.seed);
  }

  TrainResult result;
  std::vector<double> best_weights;
  double best_ppl = std::numeric_limits<double>::infinity();

  const auto start = std::chrono::steady_clock::now();
  for (int epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    // Fresh batch shuffle per epoch, derived deterministically from the seed.
    std::vector<corpus::Batch> batches = corpus::make_batches(
        train_set, vocab, hp.batch_size,
        hp.seed + 0x9e3779b97f4a7c15ull * static_cast<uint64_t>(epoch));

    double weighted = 0.0;
    long long tokens = 0;
    for (const corpus::Batch& batch : batches) {
      model.zero_grad();
      double batch_loss = model.loss_and_grad(batch, hp.dropout > 0.0);
      if (!std::isfinite(batch_loss)) {
        throw TrainDivergence("loss became non-finite at epoch " +
                              std::to_string(epoch));
      }
      model.clip_gradients(hp.clip_norm);
      model.adam_step(hp.learning_rate);
      long long n = 0;
      for (int len : batch.tgt_lengths) n += len;
      weighted += batch_loss * static_cast<double>(n);
      tokens += n;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = tokens > 0 ? weighted / static_cast<double>(tokens) : 0.0;
    double dev_loss = dev_batches.empty() ? stats.train_loss
                                          : corpus_loss(model, dev_batches);
    if (!std::isfinite(dev_loss)) {
      throw TrainDivergence("dev loss became non-finite at epoch " +
                            std::to_string(epoch));
    }
    stats.dev_perplexity = std::exp(dev_loss);
    stats.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    result.log.push_back(stats);

    if (stats.dev_perplexity < best_ppl) {
      best_ppl = stats.dev_perplexity;
      result.best_epoch = epoch;
      result.best_dev_perplexity = best_ppl;
      if (!dev_set.empty()) best_weights = model.snapshot_weights();
    }
    if (options.on_epoch && !options.on_epoch(stats, model)) break;
  }

  // With a dev set, the retained model is the best-dev checkpoint; without
  // one the final weights stand.
  if (!best_weights.empty()) model.restore_weights(best_weights);
  return result;
}

}  // namespace mrsgen::model
