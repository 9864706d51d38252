#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mrsgen/corpus.hpp"
#include "mrsgen/linearize.hpp"
#include "mrsgen/preprocess.hpp"

// Attentional encoder-decoder over linearized graphs: two-layer bidirectional
// LSTM encoder over concatenated symbol+bundle embeddings, two-layer LSTM
// decoder with bilinear global attention and a pointer-copy gate, trained
// with Adam on negative log likelihood. Everything runs in double precision
// on the CPU; parameters are immutable during inference.

namespace mrsgen::model {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct Hyperparams {
  int symbol_embed = 64;
  int bundle_embed = 8;
  int target_embed = 64;
  int hidden = 64;  // per direction; decoder layers use 2x this
  int encoder_layers = 2;
  int decoder_layers = 2;
  double dropout = 0.3;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 5.0;
  int batch_size = 16;
  int max_epochs = 50;
  int beam_width = 5;
  int max_decode_len = 120;
  bool use_copy = true;
  uint64_t seed = 1;

  static Hyperparams paper_scale();
  void validate() const;  // throws std::invalid_argument
};

struct Tensor {
  std::string name;
  Mat w;  // value
  Mat g;  // gradient
  Mat m;  // Adam first moment
  Mat v;  // Adam second moment

  Tensor(std::string n, int rows, int cols)
      : name(std::move(n)),
        w(Mat::Zero(rows, cols)),
        g(Mat::Zero(rows, cols)),
        m(Mat::Zero(rows, cols)),
        v(Mat::Zero(rows, cols)) {}
};

struct Hypothesis {
  std::vector<std::string> tokens;  // copy decisions already resolved
  double log_prob = 0.0;            // cumulative model log-probability
  double score = 0.0;               // length-normalized ranking score
  std::vector<int> copy_positions;  // per token: source position or -1
};

class Seq2Seq {
 public:
  Seq2Seq(const Hyperparams& hp, const corpus::Vocabulary& vocab);

  const Hyperparams& hyperparams() const { return hp_; }
  const corpus::Vocabulary& vocabulary() const { return vocab_; }

  // ---- training ----
  // Mean NLL per non-padding target token; no dropout, no gradients.
  double loss(const corpus::Batch& batch) const;
  // Forward + backward; gradients accumulate into the tensors.
  double loss_and_grad(const corpus::Batch& batch, bool with_dropout = true);
  void zero_grad();
  double grad_norm() const;
  void clip_gradients(double max_norm);
  void adam_step(double learning_rate);

  std::vector<Tensor>& tensors() { return params_; }
  const std::vector<Tensor>& tensors() const { return params_; }
  std::vector<double> snapshot_weights() const;
  void restore_weights(const std::vector<double>& flat);

  // ---- inference ----
  struct EncoderOutput {
    Mat contexts;                            // 2H x T, one column per position
    int valid_length = 0;                    // positions >= this are masked
    std::vector<std::pair<Vec, Vec>> init;   // decoder (h, c) per layer
  };
  struct DecodeState {
    std::vector<std::pair<Vec, Vec>> layers;  // (h, c) per decoder layer
  };
  struct DecoderStep {
    Vec generation;   // distribution over target vocabulary
    Vec attention;    // weights over source positions (0 on padding)
    Vec pointer;      // copy distribution; equals attention
    double gate = 0;  // copy gate in [0, 1]
  };

  // pad_to > length simulates padded positions (they get zero attention).
  EncoderOutput encode_sequence(const std::vector<int>& symbol_ids,
                                const std::vector<int>& bundle_ids,
                                int pad_to = 0) const;
  EncoderOutput encode_sequence(const linearize::LinearSequence& seq,
                                int pad_to = 0) const;
  DecodeState initial_state(const EncoderOutput& enc) const;
  DecoderStep decode_step(int prev_target_id, DecodeState& state,
                          const EncoderOutput& enc) const;

  // Length-bounded beam search; hypotheses ranked by length-normalized
  // log-probability. With use_copy, a step whose gate exceeds 0.5 copies a
  // source symbol; otherwise it generates from the target vocabulary.
  std::vector<Hypothesis> beam_search(const linearize::LinearSequence& seq,
                                      int width, int max_len) const;

  uint64_t symbols_hash() const { return vocab_.symbols.content_hash(); }
  uint64_t bundles_hash() const { return vocab_.bundles.content_hash(); }
  uint64_t target_hash() const { return vocab_.target.content_hash(); }

 private:
  friend void save_checkpoint(const Seq2Seq&, const std::string&);
  friend Seq2Seq load_checkpoint(const std::string&,
                                 const corpus::Vocabulary&);

  struct Workspace;  // defined in model.cpp
  double forward_pass(const corpus::Batch& batch, std::mt19937_64* dropout_rng,
                      Workspace& ws) const;
  void backward_pass(const corpus::Batch& batch, const Workspace& ws);

  int tensor_index(const std::string& name) const;
  const Mat& weight(int idx) const { return params_[idx].w; }

  Hyperparams hp_;
  corpus::Vocabulary vocab_;
  std::vector<Tensor> params_;
  // Named indices into params_.
  int embed_symbol_, embed_bundle_, embed_target_;
  struct LstmIdx {
    int W, U, b;
  };
  std::vector<LstmIdx> enc_fwd_, enc_bwd_, dec_;
  int attn_W_, comb_W_, comb_b_, out_W_, out_b_, gate_w_, gate_b_;
  long long adam_t_ = 0;
  std::mt19937_64 dropout_rng_;
};

struct TrainDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_perplexity = 0.0;
  double wall_seconds = 0.0;
};

struct TrainOptions {
  // Called after each epoch; return false to stop early. The model passed
  // in carries the weights of the epoch just finished.
  std::function<bool(const EpochStats&, Seq2Seq&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochStats> log;
  int best_epoch = -1;
  double best_dev_perplexity = 0.0;
};

// Adam over shuffled length-bucketed batches; keeps the best-dev weights and
// restores them after the final epoch. Throws TrainDivergence when the loss
// stops being finite.
TrainResult train(Seq2Seq& model,
                  const std::vector<preprocess::ProcessedExample>& train_set,
                  const std::vector<preprocess::ProcessedExample>& dev_set,
                  const TrainOptions& options = {});

struct GenerateOptions {
  int beam_width = 5;
  int max_len = 120;
  bool quiet = false;
};

// Beam search plus post-processing: copy resolution, de-anonymization, and
// de-tokenization, in that order. One output line per input example.
std::vector<std::string> generate(
    const Seq2Seq& model,
    const std::vector<preprocess::ProcessedExample>& inputs,
    const GenerateOptions& options = {});

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Versioned binary container: hyperparameters, vocabulary content hashes,
// and named parameter tensors. Loading verifies the hashes against the
// supplied vocabulary and refuses on mismatch.
void save_checkpoint(const Seq2Seq& model, const std::string& path);
Seq2Seq load_checkpoint(const std::string& path,
                        const corpus::Vocabulary& vocab);

}  // namespace mrsgen::model
