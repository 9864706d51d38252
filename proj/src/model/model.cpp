#include "mrsgen/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mrsgen::model {

namespace {

constexpr double kProbEps = 1e-12;  // keeps -log() finite, fwd and bwd agree

double uniform_unit(std::mt19937_64& rng) {
  return (rng() >> 11) * (1.0 / 9007199254740992.0);  // 53-bit mantissa
}

Mat sigmoid(const Mat& x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

// Cached activations of one LSTM layer run in one direction, indexed by
// absolute time step.
struct LstmTrace {
  std::vector<Mat> x;       // layer input
  std::vector<Mat> i, f, o, g;
  std::vector<Mat> c_cand;  // cell candidate before masking
  std::vector<Mat> ct;      // tanh(c_cand)
  std::vector<Mat> c, h;    // post-mask states

  void resize(int steps) {
    x.resize(steps);
    i.resize(steps);
    f.resize(steps);
    o.resize(steps);
    g.resize(steps);
    c_cand.resize(steps);
    ct.resize(steps);
    c.resize(steps);
    h.resize(steps);
  }
};

struct LstmWeights {
  const Mat& W;
  const Mat& U;
  const Mat& b;
};

// mask: steps x lanes, 1 for real positions; null means all real.
// reverse runs the recurrence from the last step to the first.
// h0/c0 are optional initial states (H x B).
void lstm_forward(const LstmWeights& w, std::vector<Mat> inputs,
                  const Mat* mask, bool reverse, const Mat* h0, const Mat* c0,
                  LstmTrace& trace) {
  const int steps = static_cast<int>(inputs.size());
  const int lanes = static_cast<int>(inputs[0].cols());
  const int H = static_cast<int>(w.U.cols());
  trace.resize(steps);
  trace.x = std::move(inputs);

  Mat h = h0 ? *h0 : Mat::Zero(H, lanes);
  Mat c = c0 ? *c0 : Mat::Zero(H, lanes);
  for (int k = 0; k < steps; ++k) {
    const int t = reverse ? steps - 1 - k : k;
    Mat a = w.W * trace.x[t] + w.U * h;
    a.colwise() += w.b.col(0);
    trace.i[t] = sigmoid(a.topRows(H));
    trace.f[t] = sigmoid(a.middleRows(H, H));
    trace.o[t] = sigmoid(a.middleRows(2 * H, H));
    trace.g[t] = a.bottomRows(H).array().tanh();
    trace.c_cand[t] =
        (trace.f[t].array() * c.array() + trace.i[t].array() * trace.g[t].array())
            .matrix();
    trace.ct[t] = trace.c_cand[t].array().tanh();
    Mat h_cand = (trace.o[t].array() * trace.ct[t].array()).matrix();
    if (mask) {
      Mat m = mask->row(t).replicate(H, 1);
      trace.c[t] = (m.array() * trace.c_cand[t].array() +
                    (1.0 - m.array()) * c.array())
                       .matrix();
      trace.h[t] =
          (m.array() * h_cand.array() + (1.0 - m.array()) * h.array()).matrix();
    } else {
      trace.c[t] = trace.c_cand[t];
      trace.h[t] = h_cand;
    }
    h = trace.h[t];
    c = trace.c[t];
  }
}

// dh_ext: per-step external gradient on h (nullable entries allowed via
// zero-size mats). dh_final/dc_final: gradient on the state after the last
// processed step. h0/c0 must match the initial states given to the forward
// run. dx receives input gradients; dh0/dc0 (nullable) receive the gradient
// on the initial state.
void lstm_backward(const LstmWeights& w, const LstmTrace& trace,
                   const Mat* mask, bool reverse,
                   const std::vector<Mat>* dh_ext, Mat dh_final, Mat dc_final,
                   const Mat* h0, const Mat* c0, Mat& dW, Mat& dU, Mat& db,
                   std::vector<Mat>& dx, Mat* dh0, Mat* dc0) {
  const int steps = static_cast<int>(trace.h.size());
  const int lanes = static_cast<int>(trace.h[0].cols());
  const int H = static_cast<int>(w.U.cols());
  dx.assign(steps, Mat());

  Mat dh_carry = std::move(dh_final);
  Mat dc_carry = std::move(dc_final);
  if (dh_carry.size() == 0) dh_carry = Mat::Zero(H, lanes);
  if (dc_carry.size() == 0) dc_carry = Mat::Zero(H, lanes);

  for (int k = steps - 1; k >= 0; --k) {
    const int t = reverse ? steps - 1 - k : k;
    // State before this step, by position.
    const int tp = reverse ? t + 1 : t - 1;
    const bool has_prev = reverse ? tp < steps : tp >= 0;
    Mat h_prev = has_prev ? trace.h[tp]
                          : (h0 ? *h0 : Mat::Zero(H, lanes));
    Mat c_prev = has_prev ? trace.c[tp]
                          : (c0 ? *c0 : Mat::Zero(H, lanes));

    Mat dh = dh_carry;
    if (dh_ext && (*dh_ext)[t].size() != 0) dh += (*dh_ext)[t];
    Mat dc = dc_carry;

    Mat dh_cand, dh_prev_base, dc_cand_in, dc_prev_base;
    if (mask) {
      Mat m = mask->row(t).replicate(H, 1);
      dh_cand = (m.array() * dh.array()).matrix();
      dh_prev_base = ((1.0 - m.array()) * dh.array()).matrix();
      dc_cand_in = (m.array() * dc.array()).matrix();
      dc_prev_base = ((1.0 - m.array()) * dc.array()).matrix();
    } else {
      dh_cand = dh;
      dh_prev_base = Mat::Zero(H, lanes);
      dc_cand_in = dc;
      dc_prev_base = Mat::Zero(H, lanes);
    }

    Mat do_ = (dh_cand.array() * trace.ct[t].array()).matrix();
    Mat dct = (dh_cand.array() * trace.o[t].array()).matrix();
    Mat dc_cand =
        (dc_cand_in.array() + dct.array() * (1.0 - trace.ct[t].array().square()))
            .matrix();

    Mat di = (dc_cand.array() * trace.g[t].array()).matrix();
    Mat dg = (dc_cand.array() * trace.i[t].array()).matrix();
    Mat df = (dc_cand.array() * c_prev.array()).matrix();
    Mat dc_prev =
        (dc_prev_base.array() + dc_cand.array() * trace.f[t].array()).matrix();

    Mat da(4 * H, lanes);
    da.topRows(H) =
        (di.array() * trace.i[t].array() * (1.0 - trace.i[t].array())).matrix();
    da.middleRows(H, H) =
        (df.array() * trace.f[t].array() * (1.0 - trace.f[t].array())).matrix();
    da.middleRows(2 * H, H) =
        (do_.array() * trace.o[t].array() * (1.0 - trace.o[t].array())).matrix();
    da.bottomRows(H) =
        (dg.array() * (1.0 - trace.g[t].array().square())).matrix();

    dW.noalias() += da * trace.x[t].transpose();
    dU.noalias() += da * h_prev.transpose();
    db += da.rowwise().sum();
    dx[t] = w.W.transpose() * da;
    dh_carry = dh_prev_base + w.U.transpose() * da;
    dc_carry = dc_prev;
  }
  if (dh0) *dh0 = dh_carry;
  if (dc0) *dc0 = dc_carry;
}

Mat dropout_mask(int rows, int cols, double rate, std::mt19937_64* rng) {
  if (!rng || rate <= 0.0) return Mat::Ones(rows, cols);
  Mat m(rows, cols);
  const double keep = 1.0 - rate;
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) {
      m(i, j) = uniform_unit(*rng) < keep ? 1.0 / keep : 0.0;
    }
  }
  return m;
}

// Column-wise softmax with an optional {0,1} mask of the same shape.
Mat masked_softmax(const Mat& scores, const Mat* mask) {
  Mat e = scores;
  if (mask) {
    e = (e.array() * mask->array() - 1e30 * (1.0 - mask->array())).matrix();
  }
  Eigen::RowVectorXd mx = e.colwise().maxCoeff();
  Mat shifted = (e.rowwise() - mx).array().exp().matrix();
  if (mask) shifted = (shifted.array() * mask->array()).matrix();
  Eigen::RowVectorXd denom = shifted.colwise().sum();
  return (shifted.array().rowwise() / denom.array()).matrix();
}

}  // namespace

// Everything the backward pass needs from the forward pass.
struct Seq2Seq::Workspace {
  int lanes = 0, src_steps = 0, tgt_steps = 0;
  Mat src_mask;                                  // Ts x B
  std::vector<std::vector<LstmTrace>> enc;       // [layer][0=fwd,1=bwd]
  std::vector<std::vector<Mat>> enc_drop;        // [layer-1][t]
  std::vector<Mat> contexts;                     // per t: D x B
  std::vector<int> dec_prev_ids;                 // flattened (t * B + lane)
  std::vector<Mat> dec_h0, dec_c0;               // decoder initial states
  std::vector<LstmTrace> dec;                    // per decoder layer
  std::vector<std::vector<Mat>> dec_drop;        // [layer-1][t]
  std::vector<Mat> alpha;                        // per t: Ts x B
  std::vector<Mat> z;                            // per t: 2D x B (ctx; h_top)
  std::vector<Mat> htilde, htilde_drop;          // per t: D x B
  std::vector<Mat> attn_drop;                    // per t: D x B
  std::vector<Mat> prob;                         // per t: Vt x B
  std::vector<Eigen::RowVectorXd> gate;          // per t: 1 x B
  long long token_count = 0;
};

Hyperparams Hyperparams::paper_scale() {
  Hyperparams hp;
  hp.symbol_embed = 500;
  hp.bundle_embed = 25;
  hp.target_embed = 500;
  hp.hidden = 800;
  hp.batch_size = 64;
  hp.max_epochs = 30;
  return hp;
}

void Hyperparams::validate() const {
  auto positive = [](int v, const char* what) {
    if (v <= 0) {
      throw std::invalid_argument(std::string(what) + " must be positive");
    }
  };
  positive(symbol_embed, "symbol_embed");
  positive(bundle_embed, "bundle_embed");
  positive(target_embed, "target_embed");
  positive(hidden, "hidden");
  positive(encoder_layers, "encoder_layers");
  positive(decoder_layers, "decoder_layers");
  positive(batch_size, "batch_size");
  positive(max_epochs, "max_epochs");
  positive(max_decode_len, "max_decode_len");
  if (beam_width < 1) throw std::invalid_argument("beam_width must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw std::invalid_argument("dropout must be in [0, 1)");
  }
  if (learning_rate < 0.0) {
    throw std::invalid_argument("learning_rate must be non-negative");
  }
}

Seq2Seq::Seq2Seq(const Hyperparams& hp, const corpus::Vocabulary& vocab)
    : hp_(hp), vocab_(vocab), dropout_rng_(hp.seed ^ 0x9e3779b97f4a7c15ull) {
  hp_.validate();
  const int H = hp_.hidden;
  const int D = 2 * H;
  const int in0 = hp_.symbol_embed + hp_.bundle_embed;

  auto add = [&](const std::string& name, int rows, int cols) {
    params_.emplace_back(name, rows, cols);
    return static_cast<int>(params_.size() - 1);
  };
  embed_symbol_ = add("embed.symbol", hp_.symbol_embed, vocab_.symbols.size());
  embed_bundle_ = add("embed.bundle", hp_.bundle_embed, vocab_.bundles.size());
  embed_target_ = add("embed.target", hp_.target_embed, vocab_.target.size());
  for (int l = 0; l < hp_.encoder_layers; ++l) {
    const int in = l == 0 ? in0 : D;
    for (int dir = 0; dir < 2; ++dir) {
      std::string prefix =
          "enc.l" + std::to_string(l) + (dir == 0 ? ".fwd" : ".bwd");
      LstmIdx idx{add(prefix + ".W", 4 * H, in), add(prefix + ".U", 4 * H, H),
                  add(prefix + ".b", 4 * H, 1)};
      (dir == 0 ? enc_fwd_ : enc_bwd_).push_back(idx);
    }
  }
  for (int l = 0; l < hp_.decoder_layers; ++l) {
    const int in = l == 0 ? hp_.target_embed : D;
    std::string prefix = "dec.l" + std::to_string(l);
    dec_.push_back({add(prefix + ".W", 4 * D, in), add(prefix + ".U", 4 * D, D),
                    add(prefix + ".b", 4 * D, 1)});
  }
  attn_W_ = add("attn.W", D, D);
  comb_W_ = add("attn.combine.W", D, 2 * D);
  comb_b_ = add("attn.combine.b", D, 1);
  out_W_ = add("out.W", vocab_.target.size(), D);
  out_b_ = add("out.b", vocab_.target.size(), 1);
  gate_w_ = add("gate.w", 1, D);
  gate_b_ = add("gate.b", 1, 1);

  std::mt19937_64 rng(hp_.seed);
  for (Tensor& tensor : params_) {
    if (tensor.name.size() >= 2 &&
        tensor.name.compare(tensor.name.size() - 2, 2, ".b") == 0) {
      continue;  // biases start at zero
    }
    // Fan-balanced uniform init; embedding tables use a fixed scale.
    double scale;
    if (tensor.name.rfind("embed.", 0) == 0) {
      scale = 0.1;
    } else {
      scale = std::sqrt(6.0 / static_cast<double>(tensor.w.rows() +
                                                  tensor.w.cols()));
    }
    for (int j = 0; j < tensor.w.cols(); ++j) {
      for (int i = 0; i < tensor.w.rows(); ++i) {
        tensor.w(i, j) = (2.0 * uniform_unit(rng) - 1.0) * scale;
      }
    }
  }
  // Forget-gate biases start at one.
  auto forget_bias = [&](const LstmIdx& idx, int units) {
    params_[idx.b].w.middleRows(units, units).setOnes();
  };
  for (const LstmIdx& idx : enc_fwd_) forget_bias(idx, H);
  for (const LstmIdx& idx : enc_bwd_) forget_bias(idx, H);
  for (const LstmIdx& idx : dec_) forget_bias(idx, D);
}

int Seq2Seq::tensor_index(const std::string& name) const {
  for (size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return static_cast<int>(i);
  }
  throw std::invalid_argument("unknown tensor: " + name);
}

void Seq2Seq::zero_grad() {
  for (Tensor& t : params_) t.g.setZero();
}

double Seq2Seq::grad_norm() const {
  double sq = 0.0;
  for (const Tensor& t : params_) sq += t.g.squaredNorm();
  return std::sqrt(sq);
}

void Seq2Seq::clip_gradients(double max_norm) {
  if (max_norm <= 0.0) return;
  double norm = grad_norm();
  if (norm > max_norm) {
    double scale = max_norm / norm;
    for (Tensor& t : params_) t.g *= scale;
  }
}

void Seq2Seq::adam_step(double learning_rate) {
  ++adam_t_;
  const double b1 = hp_.beta1, b2 = hp_.beta2;
  const double correct1 = 1.0 - std::pow(b1, static_cast<double>(adam_t_));
  const double correct2 = 1.0 - std::pow(b2, static_cast<double>(adam_t_));
  for (Tensor& t : params_) {
    t.m = b1 * t.m + (1.0 - b1) * t.g;
    t.v = (b2 * t.v.array() + (1.0 - b2) * t.g.array().square()).matrix();
    t.w.array() -= learning_rate * (t.m.array() / correct1) /
                   ((t.v.array() / correct2).sqrt() + hp_.adam_eps);
  }
}

std::vector<double> Seq2Seq::snapshot_weights() const {
  std::vector<double> flat;
  for (const Tensor& t : params_) {
    flat.insert(flat.end(), t.w.data(), t.w.data() + t.w.size());
  }
  return flat;
}

void Seq2Seq::restore_weights(const std::vector<double>& flat) {
  size_t offset = 0;
  for (Tensor& t : params_) {
    if (offset + t.w.size() > flat.size()) {
      throw std::invalid_argument("weight snapshot size mismatch");
    }
    std::copy(flat.begin() + offset, flat.begin() + offset + t.w.size(),
              t.w.data());
    offset += t.w.size();
  }
  if (offset != flat.size()) {
    throw std::invalid_argument("weight snapshot size mismatch");
  }
}

double Seq2Seq::forward_pass(const corpus::Batch& batch,
                             std::mt19937_64* dropout_rng,
                             Workspace& ws) const {
  const int B = batch.size();
  const int Ts = batch.src_steps();
  const int Tt = batch.tgt_steps();
  const int H = hp_.hidden;
  const int D = 2 * H;
  const double rate = hp_.dropout;
  ws.lanes = B;
  ws.src_steps = Ts;
  ws.tgt_steps = Tt;

  ws.src_mask = Mat::Zero(Ts, B);
  for (int lane = 0; lane < B; ++lane) {
    for (int t = 0; t < batch.src_lengths[lane]; ++t) ws.src_mask(t, lane) = 1.0;
  }

  // Source embeddings: symbol and bundle vectors concatenated per position.
  const Mat& E_sym = weight(embed_symbol_);
  const Mat& E_bnd = weight(embed_bundle_);
  std::vector<Mat> enc_in(Ts);
  for (int t = 0; t < Ts; ++t) {
    Mat x(hp_.symbol_embed + hp_.bundle_embed, B);
    for (int lane = 0; lane < B; ++lane) {
      x.col(lane).head(hp_.symbol_embed) = E_sym.col(batch.src_symbols(t, lane));
      x.col(lane).tail(hp_.bundle_embed) = E_bnd.col(batch.src_bundles(t, lane));
    }
    enc_in[t] = std::move(x);
  }

  // Encoder: bidirectional layers, dropout on the non-recurrent connections
  // between layers.
  ws.enc.assign(hp_.encoder_layers, std::vector<LstmTrace>(2));
  ws.enc_drop.assign(std::max(0, hp_.encoder_layers - 1), {});
  std::vector<Mat> layer_in = enc_in;
  for (int l = 0; l < hp_.encoder_layers; ++l) {
    const LstmIdx& fw = enc_fwd_[l];
    const LstmIdx& bw = enc_bwd_[l];
    lstm_forward({weight(fw.W), weight(fw.U), weight(fw.b)}, layer_in,
                 &ws.src_mask, false, nullptr, nullptr, ws.enc[l][0]);
    lstm_forward({weight(bw.W), weight(bw.U), weight(bw.b)},
                 std::move(layer_in), &ws.src_mask, true, nullptr, nullptr,
                 ws.enc[l][1]);
    if (l + 1 < hp_.encoder_layers) {
      ws.enc_drop[l].resize(Ts);
      layer_in.resize(Ts);
      for (int t = 0; t < Ts; ++t) {
        Mat concat(D, B);
        concat.topRows(H) = ws.enc[l][0].h[t];
        concat.bottomRows(H) = ws.enc[l][1].h[t];
        ws.enc_drop[l][t] = dropout_mask(D, B, rate, dropout_rng);
        layer_in[t] = (concat.array() * ws.enc_drop[l][t].array()).matrix();
      }
    }
  }
  const int top = hp_.encoder_layers - 1;
  ws.contexts.resize(Ts);
  for (int t = 0; t < Ts; ++t) {
    Mat c(D, B);
    c.topRows(H) = ws.enc[top][0].h[t];
    c.bottomRows(H) = ws.enc[top][1].h[t];
    ws.contexts[t] = std::move(c);
  }

  // Decoder initial state per layer: concatenated final states of the
  // matching encoder layer (forward at the last step, backward at step 0).
  std::vector<Mat>& h0 = ws.dec_h0;
  std::vector<Mat>& c0 = ws.dec_c0;
  h0.resize(hp_.decoder_layers);
  c0.resize(hp_.decoder_layers);
  for (int l = 0; l < hp_.decoder_layers; ++l) {
    h0[l] = Mat::Zero(D, B);
    c0[l] = Mat::Zero(D, B);
    if (l < hp_.encoder_layers) {
      h0[l].topRows(H) = ws.enc[l][0].h[Ts - 1];
      h0[l].bottomRows(H) = ws.enc[l][1].h[0];
      c0[l].topRows(H) = ws.enc[l][0].c[Ts - 1];
      c0[l].bottomRows(H) = ws.enc[l][1].c[0];
    }
  }

  double loss_sum = 0.0;
  long long tokens = 0;
  for (int lane = 0; lane < B; ++lane) tokens += batch.tgt_lengths[lane];
  ws.token_count = tokens;
  if (Tt == 0) return 0.0;  // encode-only use

  // Teacher-forced decoder inputs.
  const Mat& E_tgt = weight(embed_target_);
  ws.dec_prev_ids.assign(static_cast<size_t>(Tt) * B, corpus::Vocabulary::kPad);
  std::vector<Mat> dec_in(Tt);
  for (int t = 0; t < Tt; ++t) {
    Mat x(hp_.target_embed, B);
    for (int lane = 0; lane < B; ++lane) {
      int prev = t == 0 ? corpus::Vocabulary::kBos : batch.target(t - 1, lane);
      ws.dec_prev_ids[static_cast<size_t>(t) * B + lane] = prev;
      x.col(lane) = E_tgt.col(prev);
    }
    dec_in[t] = std::move(x);
  }

  ws.dec.assign(hp_.decoder_layers, LstmTrace{});
  ws.dec_drop.assign(std::max(0, hp_.decoder_layers - 1), {});
  std::vector<Mat> dec_layer_in = std::move(dec_in);
  for (int l = 0; l < hp_.decoder_layers; ++l) {
    const LstmIdx& dw = dec_[l];
    lstm_forward({weight(dw.W), weight(dw.U), weight(dw.b)},
                 std::move(dec_layer_in), nullptr, false, &h0[l], &c0[l],
                 ws.dec[l]);
    if (l + 1 < hp_.decoder_layers) {
      ws.dec_drop[l].resize(Tt);
      dec_layer_in.resize(Tt);
      for (int t = 0; t < Tt; ++t) {
        ws.dec_drop[l][t] = dropout_mask(D, B, rate, dropout_rng);
        dec_layer_in[t] =
            (ws.dec[l].h[t].array() * ws.dec_drop[l][t].array()).matrix();
      }
    }
  }

  // Attention, generator, and copy gate per step.
  const Mat& Wa = weight(attn_W_);
  const Mat& Wc = weight(comb_W_);
  const Mat& bc = weight(comb_b_);
  const Mat& Wo = weight(out_W_);
  const Mat& bo = weight(out_b_);
  const Mat& wg = weight(gate_w_);
  const double bg = weight(gate_b_)(0, 0);

  ws.alpha.resize(Tt);
  ws.z.resize(Tt);
  ws.htilde.resize(Tt);
  ws.htilde_drop.resize(Tt);
  ws.attn_drop.resize(Tt);
  ws.prob.resize(Tt);
  ws.gate.resize(Tt);

  for (int t = 0; t < Tt; ++t) {
    const Mat& h_top = ws.dec[hp_.decoder_layers - 1].h[t];
    Mat q = Wa * h_top;  // D x B
    Mat scores(Ts, B);
    for (int i = 0; i < Ts; ++i) {
      scores.row(i) = (ws.contexts[i].array() * q.array()).colwise().sum();
    }
    ws.alpha[t] = masked_softmax(scores, &ws.src_mask);

    Mat ctx = Mat::Zero(D, B);
    for (int i = 0; i < Ts; ++i) {
      ctx.noalias() +=
          (ws.contexts[i].array().rowwise() * ws.alpha[t].row(i).array())
              .matrix();
    }
    Mat z(2 * D, B);
    z.topRows(D) = ctx;
    z.bottomRows(D) = h_top;
    ws.z[t] = std::move(z);
    Mat pre = Wc * ws.z[t];
    pre.colwise() += bc.col(0);
    ws.htilde[t] = pre.array().tanh().matrix();
    ws.attn_drop[t] = dropout_mask(D, B, rate, dropout_rng);
    ws.htilde_drop[t] =
        (ws.htilde[t].array() * ws.attn_drop[t].array()).matrix();

    Mat logits = Wo * ws.htilde_drop[t];
    logits.colwise() += bo.col(0);
    ws.prob[t] = masked_softmax(logits, nullptr);
    Eigen::RowVectorXd gate_pre = wg * ws.htilde_drop[t];
    ws.gate[t] =
        (1.0 / (1.0 + (-(gate_pre.array() + bg)).exp())).matrix();

    for (int lane = 0; lane < B; ++lane) {
      if (t >= batch.tgt_lengths[lane]) continue;
      const corpus::Batch::CopySup& sup = batch.copy[lane][t];
      double g = ws.gate[t](lane);
      double q_prob;
      if (hp_.use_copy && sup.is_copy) {
        double mass = 0.0;
        for (int pos : sup.positions) mass += ws.alpha[t](pos, lane);
        q_prob = g * mass;
      } else {
        q_prob = (1.0 - g) * ws.prob[t](batch.target(t, lane), lane);
      }
      loss_sum += -std::log(q_prob + kProbEps);
    }
  }
  return loss_sum / static_cast<double>(std::max<long long>(1, tokens));
}

void Seq2Seq::backward_pass(const corpus::Batch& batch, const Workspace& ws) {
  const int B = ws.lanes;
  const int Ts = ws.src_steps;
  const int Tt = ws.tgt_steps;
  const int H = hp_.hidden;
  const int D = 2 * H;
  const double inv_tokens =
      1.0 / static_cast<double>(std::max<long long>(1, ws.token_count));

  const Mat& Wa = weight(attn_W_);
  const Mat& Wc = weight(comb_W_);
  const Mat& Wo = weight(out_W_);
  const Mat& wg = weight(gate_w_);

  Mat& dWa = params_[attn_W_].g;
  Mat& dWc = params_[comb_W_].g;
  Mat& dbc = params_[comb_b_].g;
  Mat& dWo = params_[out_W_].g;
  Mat& dbo = params_[out_b_].g;
  Mat& dwg = params_[gate_w_].g;
  Mat& dbg = params_[gate_b_].g;

  std::vector<Mat> dcontexts(Ts, Mat::Zero(D, B));
  std::vector<Mat> dh_top_ext(Tt);

  for (int t = Tt - 1; t >= 0; --t) {
    const Mat& h_top = ws.dec[hp_.decoder_layers - 1].h[t];
    const Mat& alpha = ws.alpha[t];
    const Mat& p = ws.prob[t];

    Mat dp = Mat::Zero(p.rows(), B);
    Eigen::RowVectorXd dgate = Eigen::RowVectorXd::Zero(B);
    Mat dalpha = Mat::Zero(Ts, B);
    for (int lane = 0; lane < B; ++lane) {
      if (t >= batch.tgt_lengths[lane]) continue;
      const corpus::Batch::CopySup& sup = batch.copy[lane][t];
      double g = ws.gate[t](lane);
      if (hp_.use_copy && sup.is_copy) {
        double mass = 0.0;
        for (int pos : sup.positions) mass += alpha(pos, lane);
        double d = -inv_tokens / (g * mass + kProbEps);
        dgate(lane) += d * mass;
        for (int pos : sup.positions) dalpha(pos, lane) += d * g;
      } else {
        int y = batch.target(t, lane);
        double py = p(y, lane);
        double d = -inv_tokens / ((1.0 - g) * py + kProbEps);
        dgate(lane) += -d * py;
        dp(y, lane) += d * (1.0 - g);
      }
    }

    // Generator softmax.
    Eigen::RowVectorXd dot = (dp.array() * p.array()).colwise().sum();
    Mat dlogits = (p.array() * (dp.array().rowwise() - dot.array())).matrix();
    dWo.noalias() += dlogits * ws.htilde_drop[t].transpose();
    dbo += dlogits.rowwise().sum();
    Mat dhd = Wo.transpose() * dlogits;

    // Copy gate.
    Eigen::RowVectorXd dgl =
        (dgate.array() * ws.gate[t].array() * (1.0 - ws.gate[t].array()))
            .matrix();
    dwg.noalias() += dgl * ws.htilde_drop[t].transpose();
    dbg(0, 0) += dgl.sum();
    dhd.noalias() += wg.transpose() * dgl;

    // Attentional hidden state.
    Mat dht = (dhd.array() * ws.attn_drop[t].array()).matrix();
    Mat dpre = (dht.array() * (1.0 - ws.htilde[t].array().square())).matrix();
    dWc.noalias() += dpre * ws.z[t].transpose();
    dbc += dpre.rowwise().sum();
    Mat dz = Wc.transpose() * dpre;
    Mat dctx = dz.topRows(D);
    Mat dh_top = dz.bottomRows(D);

    // Context vector and attention weights.
    for (int i = 0; i < Ts; ++i) {
      dalpha.row(i) +=
          (ws.contexts[i].array() * dctx.array()).colwise().sum().matrix();
      dcontexts[i].noalias() +=
          (dctx.array().rowwise() * alpha.row(i).array()).matrix();
    }
    Eigen::RowVectorXd asum = (alpha.array() * dalpha.array()).colwise().sum();
    Mat de = (alpha.array() * (dalpha.array().rowwise() - asum.array())).matrix();

    Mat q = Wa * h_top;
    Mat dq = Mat::Zero(D, B);
    for (int i = 0; i < Ts; ++i) {
      dq.noalias() +=
          (ws.contexts[i].array().rowwise() * de.row(i).array()).matrix();
      dcontexts[i].noalias() +=
          (q.array().rowwise() * de.row(i).array()).matrix();
    }
    dWa.noalias() += dq * h_top.transpose();
    dh_top.noalias() += Wa.transpose() * dq;

    dh_top_ext[t] = std::move(dh_top);
  }

  // Decoder stack, top layer first.
  std::vector<Mat> dh_ext = std::move(dh_top_ext);
  std::vector<Mat> dh0(hp_.decoder_layers), dc0(hp_.decoder_layers);
  for (int l = hp_.decoder_layers - 1; l >= 0; --l) {
    const LstmIdx& dw = dec_[l];
    std::vector<Mat> dx;
    lstm_backward({weight(dw.W), weight(dw.U), weight(dw.b)}, ws.dec[l],
                  nullptr, false, &dh_ext, Mat(), Mat(), &ws.dec_h0[l],
                  &ws.dec_c0[l], params_[dw.W].g, params_[dw.U].g,
                  params_[dw.b].g, dx, &dh0[l], &dc0[l]);
    if (l > 0) {
      dh_ext.assign(Tt, Mat());
      for (int t = 0; t < Tt; ++t) {
        dh_ext[t] = (dx[t].array() * ws.dec_drop[l - 1][t].array()).matrix();
      }
    } else {
      // Input embedding gradients.
      Mat& dE_tgt = params_[embed_target_].g;
      for (int t = 0; t < Tt; ++t) {
        for (int lane = 0; lane < B; ++lane) {
          dE_tgt.col(ws.dec_prev_ids[static_cast<size_t>(t) * B + lane]) +=
              dx[t].col(lane);
        }
      }
    }
  }

  // Encoder stack. External per-position gradients on the top layer come
  // from the attention contexts; every layer also receives final-state
  // gradients from the decoder initialization.
  std::vector<Mat> dfwd_ext(Ts), dbwd_ext(Ts);
  for (int t = 0; t < Ts; ++t) {
    dfwd_ext[t] = dcontexts[t].topRows(H);
    dbwd_ext[t] = dcontexts[t].bottomRows(H);
  }
  for (int l = hp_.encoder_layers - 1; l >= 0; --l) {
    Mat dh_final_fwd = Mat::Zero(H, B), dc_final_fwd = Mat::Zero(H, B);
    Mat dh_final_bwd = Mat::Zero(H, B), dc_final_bwd = Mat::Zero(H, B);
    if (l < hp_.decoder_layers) {
      dh_final_fwd = dh0[l].topRows(H);
      dh_final_bwd = dh0[l].bottomRows(H);
      dc_final_fwd = dc0[l].topRows(H);
      dc_final_bwd = dc0[l].bottomRows(H);
    }
    const LstmIdx& fw = enc_fwd_[l];
    const LstmIdx& bw = enc_bwd_[l];
    std::vector<Mat> dx_fwd, dx_bwd;
    lstm_backward({weight(fw.W), weight(fw.U), weight(fw.b)}, ws.enc[l][0],
                  &ws.src_mask, false, &dfwd_ext, std::move(dh_final_fwd),
                  std::move(dc_final_fwd), nullptr, nullptr, params_[fw.W].g,
                  params_[fw.U].g, params_[fw.b].g, dx_fwd, nullptr, nullptr);
    lstm_backward({weight(bw.W), weight(bw.U), weight(bw.b)}, ws.enc[l][1],
                  &ws.src_mask, true, &dbwd_ext, std::move(dh_final_bwd),
                  std::move(dc_final_bwd), nullptr, nullptr, params_[bw.W].g,
                  params_[bw.U].g, params_[bw.b].g, dx_bwd, nullptr, nullptr);
    if (l > 0) {
      for (int t = 0; t < Ts; ++t) {
        Mat dcat =
            ((dx_fwd[t] + dx_bwd[t]).array() * ws.enc_drop[l - 1][t].array())
                .matrix();
        dfwd_ext[t] = dcat.topRows(H);
        dbwd_ext[t] = dcat.bottomRows(H);
      }
    } else {
      Mat& dE_sym = params_[embed_symbol_].g;
      Mat& dE_bnd = params_[embed_bundle_].g;
      for (int t = 0; t < Ts; ++t) {
        Mat dx = dx_fwd[t] + dx_bwd[t];
        for (int lane = 0; lane < B; ++lane) {
          dE_sym.col(batch.src_symbols(t, lane)) +=
              dx.col(lane).head(hp_.symbol_embed);
          dE_bnd.col(batch.src_bundles(t, lane)) +=
              dx.col(lane).tail(hp_.bundle_embed);
        }
      }
    }
  }
}

double Seq2Seq::loss(const corpus::Batch& batch) const {
  Workspace ws;
  return forward_pass(batch, nullptr, ws);
}

double Seq2Seq::loss_and_grad(const corpus::Batch& batch, bool with_dropout) {
  Workspace ws;
  std::mt19937_64* rng =
      with_dropout && hp_.dropout > 0.0 ? &dropout_rng_ : nullptr;
  double value = forward_pass(batch, rng, ws);
  backward_pass(batch, ws);
  return value;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

Seq2Seq::EncoderOutput Seq2Seq::encode_sequence(
    const std::vector<int>& symbol_ids, const std::vector<int>& bundle_ids,
    int pad_to) const {
  if (symbol_ids.empty()) throw std::invalid_argument("empty source sequence");
  if (symbol_ids.size() != bundle_ids.size()) {
    throw std::invalid_argument("symbol/bundle id count mismatch");
  }
  const int len = static_cast<int>(symbol_ids.size());
  const int Ts = std::max(len, pad_to);

  corpus::Batch batch;
  batch.src_symbols =
      Eigen::MatrixXi::Constant(Ts, 1, corpus::Vocabulary::kPad);
  batch.src_bundles =
      Eigen::MatrixXi::Constant(Ts, 1, corpus::Vocabulary::kPad);
  for (int t = 0; t < len; ++t) {
    batch.src_symbols(t, 0) = symbol_ids[t];
    batch.src_bundles(t, 0) = bundle_ids[t];
  }
  batch.src_lengths = {len};
  batch.tgt_lengths = {0};
  batch.target = Eigen::MatrixXi::Constant(0, 1, corpus::Vocabulary::kPad);
  batch.copy.resize(1);

  Workspace ws;
  forward_pass(batch, nullptr, ws);

  EncoderOutput out;
  out.valid_length = len;
  const int D = 2 * hp_.hidden;
  out.contexts = Mat(D, Ts);
  for (int t = 0; t < Ts; ++t) out.contexts.col(t) = ws.contexts[t].col(0);
  const int H = hp_.hidden;
  for (int l = 0; l < hp_.decoder_layers; ++l) {
    Vec h = Vec::Zero(D), c = Vec::Zero(D);
    if (l < hp_.encoder_layers) {
      h.head(H) = ws.enc[l][0].h[Ts - 1].col(0);
      h.tail(H) = ws.enc[l][1].h[0].col(0);
      c.head(H) = ws.enc[l][0].c[Ts - 1].col(0);
      c.tail(H) = ws.enc[l][1].c[0].col(0);
    }
    out.init.emplace_back(std::move(h), std::move(c));
  }
  return out;
}

Seq2Seq::EncoderOutput Seq2Seq::encode_sequence(
    const linearize::LinearSequence& seq, int pad_to) const {
  std::vector<int> sym, bnd;
  sym.reserve(seq.size());
  bnd.reserve(seq.size());
  for (size_t i = 0; i < seq.size(); ++i) {
    sym.push_back(vocab_.symbols.lookup(seq.symbols[i]));
    bnd.push_back(vocab_.bundle_id(seq.attributes[i]));
  }
  return encode_sequence(sym, bnd, pad_to);
}

Seq2Seq::DecodeState Seq2Seq::initial_state(const EncoderOutput& enc) const {
  DecodeState state;
  state.layers = enc.init;
  return state;
}

Seq2Seq::DecoderStep Seq2Seq::decode_step(int prev_target_id,
                                          DecodeState& state,
                                          const EncoderOutput& enc) const {
  const int H = hp_.hidden;
  const int D = 2 * H;
  const int Ts = static_cast<int>(enc.contexts.cols());

  Vec x = weight(embed_target_).col(prev_target_id);
  for (int l = 0; l < hp_.decoder_layers; ++l) {
    const LstmIdx& dw = dec_[l];
    Vec a = weight(dw.W) * x + weight(dw.U) * state.layers[l].first +
            weight(dw.b).col(0);
    Vec i = (1.0 / (1.0 + (-a.head(D).array()).exp())).matrix();
    Vec f = (1.0 / (1.0 + (-a.segment(D, D).array()).exp())).matrix();
    Vec o = (1.0 / (1.0 + (-a.segment(2 * D, D).array()).exp())).matrix();
    Vec g = a.tail(D).array().tanh().matrix();
    Vec c = (f.array() * state.layers[l].second.array() +
             i.array() * g.array())
                .matrix();
    Vec h = (o.array() * c.array().tanh()).matrix();
    state.layers[l] = {h, c};
    x = h;
  }
  const Vec& h_top = state.layers.back().first;

  Vec q = weight(attn_W_) * h_top;
  Vec scores = enc.contexts.transpose() * q;  // Ts
  for (int i = enc.valid_length; i < Ts; ++i) scores(i) = -1e30;
  double mx = scores.head(std::max(1, enc.valid_length)).maxCoeff();
  Vec alpha = (scores.array() - mx).exp().matrix();
  for (int i = enc.valid_length; i < Ts; ++i) alpha(i) = 0.0;
  alpha /= alpha.sum();

  Vec ctx = enc.contexts * alpha;
  Vec z(2 * D);
  z.head(D) = ctx;
  z.tail(D) = h_top;
  Vec htilde =
      ((weight(comb_W_) * z + weight(comb_b_).col(0)).array().tanh()).matrix();
  Vec logits = weight(out_W_) * htilde + weight(out_b_).col(0);
  double lmx = logits.maxCoeff();
  Vec p = (logits.array() - lmx).exp().matrix();
  p /= p.sum();
  double gate_pre = (weight(gate_w_) * htilde)(0, 0) + weight(gate_b_)(0, 0);

  DecoderStep step;
  step.generation = std::move(p);
  step.attention = alpha;
  step.pointer = std::move(alpha);
  step.gate = 1.0 / (1.0 + std::exp(-gate_pre));
  return step;
}

}  // namespace mrsgen::model
