#include "hypgen/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hypgen::ranker {

namespace {

constexpr double kLnEps = 1e-5;

Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t k = 0; k < a.cols; ++k) {
      double aik = a.at(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.a.data() + k * b.cols;
      double* orow = out.a.data() + i * out.cols;
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  return out;
}

// out += a^T b
void add_matmul_at(const Mat& a, const Mat& b, Mat& out) {
  for (std::size_t k = 0; k < a.rows; ++k)
    for (std::size_t i = 0; i < a.cols; ++i) {
      double aki = a.at(k, i);
      if (aki == 0.0) continue;
      const double* brow = b.a.data() + k * b.cols;
      double* orow = out.a.data() + i * out.cols;
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
    }
}

// a b^T
Mat matmul_bt(const Mat& a, const Mat& b) {
  Mat out(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.rows; ++j) {
      double s = 0.0;
      const double* ar = a.a.data() + i * a.cols;
      const double* br = b.a.data() + j * b.cols;
      for (std::size_t k = 0; k < a.cols; ++k) s += ar[k] * br[k];
      out.at(i, j) = s;
    }
  return out;
}

void add_rowwise(Mat& x, const std::vector<double>& b) {
  for (std::size_t i = 0; i < x.rows; ++i) {
    double* row = x.a.data() + i * x.cols;
    for (std::size_t j = 0; j < x.cols; ++j) row[j] += b[j];
  }
}

void add_colsum(const Mat& x, std::span<double> out) {
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) out[j] += x.at(i, j);
}

Mat relu(const Mat& x) {
  Mat out = x;
  for (double& v : out.a) v = std::max(0.0, v);
  return out;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Mat linear(const Mat& x, const Mat& w, const std::vector<double>& b) {
  if (x.cols != w.rows) throw std::invalid_argument("linear: shape mismatch");
  Mat out = matmul(x, w);
  if (!b.empty()) add_rowwise(out, b);
  return out;
}

Mat softmax_rows(const Mat& x) {
  Mat out = x;
  for (std::size_t i = 0; i < x.rows; ++i) {
    double* row = out.a.data() + i * out.cols;
    double mx = row[0];
    for (std::size_t j = 1; j < x.cols; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < x.cols; ++j) row[j] /= sum;
  }
  return out;
}

Mat layer_norm(const Mat& x, const std::vector<double>& gain,
               const std::vector<double>& bias, Mat* normalized,
               std::vector<double>* inv_std) {
  Mat out(x.rows, x.cols);
  if (normalized) *normalized = Mat(x.rows, x.cols);
  if (inv_std) inv_std->assign(x.rows, 0.0);
  double n = static_cast<double>(x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double* row = x.a.data() + i * x.cols;
    double mu = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) mu += row[j];
    mu /= n;
    double var = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      double d = row[j] - mu;
      var += d * d;
    }
    var /= n;
    double inv = 1.0 / std::sqrt(var + kLnEps);
    if (inv_std) (*inv_std)[i] = inv;
    for (std::size_t j = 0; j < x.cols; ++j) {
      double xhat = (row[j] - mu) * inv;
      if (normalized) normalized->at(i, j) = xhat;
      out.at(i, j) = gain[j] * xhat + bias[j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// model

namespace {

// Parameters per encoder block, in declaration order.
constexpr std::size_t kPerLayer = 16;

}  // namespace

RankerModel::RankerModel(const RankerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.hidden_dim % cfg.heads != 0)
    throw std::invalid_argument("hidden_dim must be divisible by heads");
  if (cfg.input_dim < 1 || cfg.layers < 1)
    throw std::invalid_argument("bad ranker config");

  Rng rng(derive_seed(seed, "ranker-init"));
  auto weight = [&](std::size_t in, std::size_t out_dim, const std::string& name) {
    Mat m(in, out_dim);
    double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : m.a) v = rng.uniform(-scale, scale);
    params_.push_back(std::move(m));
    names_.push_back(name);
  };
  auto vec = [&](std::size_t n, double fill, const std::string& name) {
    Mat m(1, n);
    for (double& v : m.a) v = fill;
    params_.push_back(std::move(m));
    names_.push_back(name);
  };

  std::size_t d = cfg.input_dim, h = cfg.hidden_dim, f = cfg.ff_dim;
  weight(d, f, "in.w1");
  vec(f, 0.0, "in.b1");
  weight(f, h, "in.w2");
  vec(h, 0.0, "in.b2");
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    std::string p = "enc" + std::to_string(l) + ".";
    weight(h, h, p + "wq");
    vec(h, 0.0, p + "bq");
    weight(h, h, p + "wk");
    vec(h, 0.0, p + "bk");
    weight(h, h, p + "wv");
    vec(h, 0.0, p + "bv");
    weight(h, h, p + "wo");
    vec(h, 0.0, p + "bo");
    vec(h, 1.0, p + "ln1.g");
    vec(h, 0.0, p + "ln1.b");
    weight(h, f, p + "ff.w1");
    vec(f, 0.0, p + "ff.b1");
    weight(f, h, p + "ff.w2");
    vec(h, 0.0, p + "ff.b2");
    vec(h, 1.0, p + "ln2.g");
    vec(h, 0.0, p + "ln2.b");
  }
  {
    Mat theta(1, h);
    double scale = 1.0 / std::sqrt(static_cast<double>(h));
    for (double& v : theta.a) v = rng.uniform(-scale, scale);
    params_.push_back(std::move(theta));
    names_.push_back("theta");
  }
}

std::size_t RankerModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.a.size();
  return n;
}

std::vector<Mat> RankerModel::zero_grads() const {
  std::vector<Mat> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.emplace_back(p.rows, p.cols);
  return out;
}

double RankerModel::forward(
    const std::vector<std::span<const double>>& sequence) const {
  Tape tape;
  return forward_tape(sequence, tape);
}

double RankerModel::forward_tape(const std::vector<std::span<const double>>& sequence,
                                 Tape& tape) const {
  if (sequence.size() < 2)
    throw std::invalid_argument("ranker sequence needs the two term vectors");
  std::size_t L = sequence.size();
  std::size_t d = cfg_.input_dim, h = cfg_.hidden_dim;
  std::size_t heads = cfg_.heads, dh = h / heads;

  tape.x0 = Mat(L, d);
  for (std::size_t i = 0; i < L; ++i) {
    if (sequence[i].size() != d)
      throw std::invalid_argument("ranker input vector has wrong dimension");
    std::copy(sequence[i].begin(), sequence[i].end(), tape.x0.row(i).begin());
  }

  std::size_t pi = 0;
  auto next = [&]() -> const Mat& { return params_[pi++]; };
  auto next_vec = [&]() -> const std::vector<double>& { return params_[pi++].a; };

  const Mat& in_w1 = next();
  const std::vector<double>& in_b1 = next_vec();
  const Mat& in_w2 = next();
  const std::vector<double>& in_b2 = next_vec();

  tape.u_pre = linear(tape.x0, in_w1, in_b1);
  Mat u_act = relu(tape.u_pre);
  tape.x_in = linear(u_act, in_w2, in_b2);

  Mat x = tape.x_in;
  tape.layers.clear();
  tape.layers.resize(cfg_.layers);
  double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    auto& t = tape.layers[l];
    t.x = x;
    const Mat& wq = next();
    const std::vector<double>& bq = next_vec();
    const Mat& wk = next();
    const std::vector<double>& bk = next_vec();
    const Mat& wv = next();
    const std::vector<double>& bv = next_vec();
    const Mat& wo = next();
    const std::vector<double>& bo = next_vec();
    const std::vector<double>& ln1_g = next_vec();
    const std::vector<double>& ln1_b = next_vec();
    const Mat& ff_w1 = next();
    const std::vector<double>& ff_b1 = next_vec();
    const Mat& ff_w2 = next();
    const std::vector<double>& ff_b2 = next_vec();
    const std::vector<double>& ln2_g = next_vec();
    const std::vector<double>& ln2_b = next_vec();

    t.q = linear(x, wq, bq);
    t.k = linear(x, wk, bk);
    t.v = linear(x, wv, bv);

    t.p.clear();
    t.o = Mat(L, h);
    for (std::size_t a = 0; a < heads; ++a) {
      Mat qa(L, dh), ka(L, dh), va(L, dh);
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < dh; ++j) {
          qa.at(i, j) = t.q.at(i, a * dh + j);
          ka.at(i, j) = t.k.at(i, a * dh + j);
          va.at(i, j) = t.v.at(i, a * dh + j);
        }
      Mat scores = matmul_bt(qa, ka);
      for (double& s : scores.a) s *= inv_sqrt_dh;
      Mat p = softmax_rows(scores);
      Mat oa = matmul(p, va);
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < dh; ++j) t.o.at(i, a * dh + j) = oa.at(i, j);
      t.p.push_back(std::move(p));
    }

    Mat m = linear(t.o, wo, bo);
    Mat r1 = x;
    for (std::size_t i = 0; i < r1.a.size(); ++i) r1.a[i] += m.a[i];
    t.a1 = layer_norm(r1, ln1_g, ln1_b, &t.xhat1, &t.inv1);

    t.f_pre = linear(t.a1, ff_w1, ff_b1);
    t.f_act = relu(t.f_pre);
    Mat f_out = linear(t.f_act, ff_w2, ff_b2);
    Mat r2 = t.a1;
    for (std::size_t i = 0; i < r2.a.size(); ++i) r2.a[i] += f_out.a[i];
    x = layer_norm(r2, ln2_g, ln2_b, &t.xhat2, &t.inv2);
  }

  const std::vector<double>& theta = params_[pi].a;
  tape.x_final = x;
  tape.pooled.assign(h, 0.0);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < h; ++j) tape.pooled[j] += x.at(i, j);
  for (double& v : tape.pooled) v /= static_cast<double>(L);

  tape.z = 0.0;
  for (std::size_t j = 0; j < h; ++j) tape.z += tape.pooled[j] * theta[j];
  tape.out = sigmoid(tape.z);
  return tape.out;
}

namespace {

// dx for y = gain * xhat + bias given dy, with population statistics.
Mat layer_norm_backward(const Mat& dy, const Mat& xhat,
                        const std::vector<double>& inv_std,
                        const std::vector<double>& gain, std::span<double> dgain,
                        std::span<double> dbias) {
  Mat dx(dy.rows, dy.cols);
  double n = static_cast<double>(dy.cols);
  for (std::size_t i = 0; i < dy.rows; ++i) {
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < dy.cols; ++j) {
      double dyv = dy.at(i, j);
      double xh = xhat.at(i, j);
      dgain[j] += dyv * xh;
      dbias[j] += dyv;
      double dxhat = dyv * gain[j];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xh;
    }
    for (std::size_t j = 0; j < dy.cols; ++j) {
      double dxhat = dy.at(i, j) * gain[j];
      dx.at(i, j) =
          inv_std[i] * (dxhat - sum_dxhat / n - xhat.at(i, j) * sum_dxhat_xhat / n);
    }
  }
  return dx;
}

}  // namespace

void RankerModel::backward(const Tape& tape, double upstream,
                           std::vector<Mat>& grads) const {
  std::size_t L = tape.x0.rows;
  std::size_t h = cfg_.hidden_dim, heads = cfg_.heads, dh = h / heads;
  double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  std::size_t theta_i = 4 + cfg_.layers * kPerLayer;
  const std::vector<double>& theta = params_[theta_i].a;

  double dz = upstream * tape.out * (1.0 - tape.out);
  for (std::size_t j = 0; j < h; ++j) grads[theta_i].a[j] += dz * tape.pooled[j];

  Mat dx(L, h);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < h; ++j)
      dx.at(i, j) = dz * theta[j] / static_cast<double>(L);

  for (std::size_t l = cfg_.layers; l-- > 0;) {
    const auto& t = tape.layers[l];
    std::size_t base = 4 + l * kPerLayer;
    const Mat& wq = params_[base + 0];
    const Mat& wk = params_[base + 2];
    const Mat& wv = params_[base + 4];
    const Mat& wo = params_[base + 6];
    const std::vector<double>& ln1_g = params_[base + 8].a;
    const Mat& ff_w1 = params_[base + 10];
    const Mat& ff_w2 = params_[base + 12];
    const std::vector<double>& ln2_g = params_[base + 14].a;

    // x = LN2(a1 + f_out)
    Mat dr2 = layer_norm_backward(dx, t.xhat2, t.inv2, ln2_g, grads[base + 14].a,
                                  grads[base + 15].a);
    Mat da1 = dr2;  // residual branch

    // f_out = relu(a1 ff_w1 + b1) ff_w2 + b2
    add_matmul_at(t.f_act, dr2, grads[base + 12]);
    add_colsum(dr2, grads[base + 13].a);
    Mat df_act = matmul_bt(dr2, ff_w2);
    for (std::size_t i = 0; i < df_act.a.size(); ++i)
      if (t.f_pre.a[i] <= 0.0) df_act.a[i] = 0.0;
    add_matmul_at(t.a1, df_act, grads[base + 10]);
    add_colsum(df_act, grads[base + 11].a);
    {
      Mat more = matmul_bt(df_act, ff_w1);
      for (std::size_t i = 0; i < da1.a.size(); ++i) da1.a[i] += more.a[i];
    }

    // a1 = LN1(x + o wo + bo)
    Mat dr1 = layer_norm_backward(da1, t.xhat1, t.inv1, ln1_g, grads[base + 8].a,
                                  grads[base + 9].a);
    Mat dx_layer = dr1;  // residual branch

    add_matmul_at(t.o, dr1, grads[base + 6]);
    add_colsum(dr1, grads[base + 7].a);
    Mat do_ = matmul_bt(dr1, wo);

    Mat dq(L, h), dk(L, h), dv(L, h);
    for (std::size_t a = 0; a < heads; ++a) {
      Mat doa(L, dh), qa(L, dh), ka(L, dh), va(L, dh);
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < dh; ++j) {
          doa.at(i, j) = do_.at(i, a * dh + j);
          qa.at(i, j) = t.q.at(i, a * dh + j);
          ka.at(i, j) = t.k.at(i, a * dh + j);
          va.at(i, j) = t.v.at(i, a * dh + j);
        }
      const Mat& p = t.p[a];
      Mat dp = matmul_bt(doa, va);
      Mat dva(L, dh);
      add_matmul_at(p, doa, dva);
      Mat ds(L, L);
      for (std::size_t i = 0; i < L; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < L; ++j) dot += dp.at(i, j) * p.at(i, j);
        for (std::size_t j = 0; j < L; ++j)
          ds.at(i, j) = p.at(i, j) * (dp.at(i, j) - dot);
      }
      for (double& s : ds.a) s *= inv_sqrt_dh;
      Mat dqa = matmul(ds, ka);
      Mat dka(L, dh);
      add_matmul_at(ds, qa, dka);
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < dh; ++j) {
          dq.at(i, a * dh + j) = dqa.at(i, j);
          dk.at(i, a * dh + j) = dka.at(i, j);
          dv.at(i, a * dh + j) = dva.at(i, j);
        }
    }

    add_matmul_at(t.x, dq, grads[base + 0]);
    add_colsum(dq, grads[base + 1].a);
    add_matmul_at(t.x, dk, grads[base + 2]);
    add_colsum(dk, grads[base + 3].a);
    add_matmul_at(t.x, dv, grads[base + 4]);
    add_colsum(dv, grads[base + 5].a);
    {
      Mat more = matmul_bt(dq, wq);
      for (std::size_t i = 0; i < dx_layer.a.size(); ++i) dx_layer.a[i] += more.a[i];
      more = matmul_bt(dk, wk);
      for (std::size_t i = 0; i < dx_layer.a.size(); ++i) dx_layer.a[i] += more.a[i];
      more = matmul_bt(dv, wv);
      for (std::size_t i = 0; i < dx_layer.a.size(); ++i) dx_layer.a[i] += more.a[i];
    }
    dx = std::move(dx_layer);
  }

  // x_in = relu(x0 in_w1 + in_b1) in_w2 + in_b2
  const Mat& in_w2 = params_[2];
  Mat u_act = relu(tape.u_pre);
  add_matmul_at(u_act, dx, grads[2]);
  add_colsum(dx, grads[3].a);
  Mat du = matmul_bt(dx, in_w2);
  for (std::size_t i = 0; i < du.a.size(); ++i)
    if (tape.u_pre.a[i] <= 0.0) du.a[i] = 0.0;
  add_matmul_at(tape.x0, du, grads[0]);
  add_colsum(du, grads[1].a);
}

// ---------------------------------------------------------------------------
// checkpoint

namespace {

constexpr std::string_view kCkptMagic = "HRNK1";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}
std::uint32_t get_u32(const std::string& s, std::size_t& pos) {
  if (pos + 4 > s.size()) throw std::runtime_error("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
  pos += 4;
  return v;
}
std::uint64_t get_u64(const std::string& s, std::size_t& pos) {
  if (pos + 8 > s.size()) throw std::runtime_error("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
  pos += 8;
  return v;
}

}  // namespace

void RankerModel::save(const std::string& path, std::uint64_t store_checksum) const {
  std::string out;
  out += kCkptMagic;
  put_u32(out, 1);  // version
  put_u32(out, static_cast<std::uint32_t>(cfg_.input_dim));
  put_u32(out, static_cast<std::uint32_t>(cfg_.hidden_dim));
  put_u32(out, static_cast<std::uint32_t>(cfg_.heads));
  put_u32(out, static_cast<std::uint32_t>(cfg_.layers));
  put_u32(out, static_cast<std::uint32_t>(cfg_.ff_dim));
  put_u64(out, store_checksum);
  put_u64(out, parameter_count());
  for (const auto& p : params_)
    for (double v : p.a) {
      float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(out, bits);
    }
  write_text_file(path, out);
}

RankerModel RankerModel::load(const std::string& path, std::uint64_t* store_checksum) {
  std::string raw = read_text_file(path);
  if (raw.size() < kCkptMagic.size() ||
      raw.compare(0, kCkptMagic.size(), kCkptMagic) != 0)
    throw std::runtime_error("not a ranker checkpoint (bad magic): " + path);
  std::size_t pos = kCkptMagic.size();
  std::uint32_t version = get_u32(raw, pos);
  if (version != 1) throw std::runtime_error("unsupported checkpoint version");
  RankerConfig cfg;
  cfg.input_dim = get_u32(raw, pos);
  cfg.hidden_dim = get_u32(raw, pos);
  cfg.heads = get_u32(raw, pos);
  cfg.layers = get_u32(raw, pos);
  cfg.ff_dim = get_u32(raw, pos);
  std::uint64_t checksum = get_u64(raw, pos);
  if (store_checksum) *store_checksum = checksum;
  std::uint64_t count = get_u64(raw, pos);
  RankerModel model(cfg, 0);
  if (model.parameter_count() != count)
    throw std::runtime_error("checkpoint parameter count mismatch");
  for (auto& p : model.params_)
    for (double& v : p.a) {
      std::uint32_t bits = get_u32(raw, pos);
      float f;
      std::memcpy(&f, &bits, 4);
      v = f;
    }
  return model;
}

// ---------------------------------------------------------------------------
// loss and batches

double margin_loss(double positive_score, std::span<const double> negative_scores,
                   double margin) {
  if (negative_scores.empty())
    throw std::invalid_argument("margin_loss: need at least one negative");
  double sum = 0.0;
  for (double n : negative_scores) sum += std::max(0.0, margin - positive_score + n);
  return sum / static_cast<double>(negative_scores.size());
}

std::vector<std::pair<std::string, std::string>> positive_pairs(
    const std::vector<predicates::Predicate>& preds) {
  std::set<std::pair<std::string, std::string>> uniq;
  for (const auto& p : preds)
    uniq.emplace(graph::node_key(graph::NodeType::CodedTerm, p.subj_cui),
                 graph::node_key(graph::NodeType::CodedTerm, p.obj_cui));
  return {uniq.begin(), uniq.end()};
}

TrainingBatch make_training_batch(
    const std::vector<std::pair<std::string, std::string>>& positives,
    std::span<const std::size_t> batch_indices, const graph::SemanticGraph& g,
    const std::set<std::pair<std::string, std::string>>& training_pairs,
    const RankTrainConfig& cfg, Rng& rng) {
  // Coded-term pool for corruption, in key order.
  std::vector<std::string> term_pool;
  for (const auto& k : g.keys())
    if (k[0] == 'm') term_pool.push_back(k);
  std::sort(term_pool.begin(), term_pool.end());
  if (term_pool.size() < 2)
    throw std::runtime_error("make_training_batch: coded-term layer too small");

  TrainingBatch batch;
  auto sample_nbhd = [&](const std::string& key) {
    auto nb = graph::sample_neighborhood(g, key, cfg.neighborhood, rng.next_u64());
    if (nb.empty()) batch.empty_neighborhood_seen = true;
    return nb;
  };

  for (std::size_t idx : batch_indices) {
    const auto& [subj, obj] = positives.at(idx);
    BatchExample ex;
    ex.positive.subj_key = subj;
    ex.positive.obj_key = obj;
    ex.positive.subj_neighborhood = sample_nbhd(subj);
    ex.positive.obj_neighborhood = sample_nbhd(obj);

    for (int k = 0; k < cfg.negatives; ++k) {
      std::string corrupted;
      for (int tries = 0; tries < 10000; ++tries) {
        const std::string& cand =
            term_pool[static_cast<std::size_t>(rng.bounded(term_pool.size()))];
        if (cand == subj || cand == obj) continue;
        if (training_pairs.count({subj, cand})) continue;
        corrupted = cand;
        break;
      }
      if (corrupted.empty())
        throw std::runtime_error(
            "make_training_batch: term layer exhausted while corrupting " + subj);
      PairExample neg;
      neg.subj_key = subj;
      neg.obj_key = corrupted;
      neg.subj_neighborhood = ex.positive.subj_neighborhood;
      neg.obj_neighborhood = sample_nbhd(corrupted);
      ex.negatives.push_back(std::move(neg));
    }
    batch.examples.push_back(std::move(ex));
  }
  return batch;
}

// ---------------------------------------------------------------------------
// training

namespace {

std::vector<std::span<const double>> build_sequence(
    const PairExample& ex, const embedding::EmbeddingStore& store) {
  std::vector<std::span<const double>> seq;
  seq.reserve(2 + ex.subj_neighborhood.size() + ex.obj_neighborhood.size());
  seq.push_back(store.vec(ex.subj_key));
  seq.push_back(store.vec(ex.obj_key));
  for (const auto& k : ex.subj_neighborhood) seq.push_back(store.vec(k));
  for (const auto& k : ex.obj_neighborhood) seq.push_back(store.vec(k));
  return seq;
}

// Mean margin loss over a batch; gradients accumulated when grads != null.
double batch_loss_and_grads(const RankerModel& model,
                            const embedding::EmbeddingStore& store,
                            const TrainingBatch& batch, double margin,
                            std::vector<Mat>* grads) {
  double total = 0.0;
  std::size_t n = batch.examples.size();
  if (n == 0) return 0.0;
  for (const auto& ex : batch.examples) {
    RankerModel::Tape pos_tape;
    double pos = grads
                     ? model.forward_tape(build_sequence(ex.positive, store), pos_tape)
                     : model.forward(build_sequence(ex.positive, store));
    double k = static_cast<double>(ex.negatives.size());
    double pos_coeff = 0.0;
    for (const auto& neg : ex.negatives) {
      RankerModel::Tape neg_tape;
      double ns = grads ? model.forward_tape(build_sequence(neg, store), neg_tape)
                        : model.forward(build_sequence(neg, store));
      double hinge = margin - pos + ns;
      if (hinge > 0.0) {
        total += hinge / k;
        if (grads) {
          model.backward(neg_tape, 1.0 / (k * static_cast<double>(n)), *grads);
          pos_coeff -= 1.0 / (k * static_cast<double>(n));
        }
      }
    }
    if (grads && pos_coeff != 0.0) model.backward(pos_tape, pos_coeff, *grads);
  }
  return total / static_cast<double>(n);
}

}  // namespace

RankerModel train_ranker(const graph::SemanticGraph& g,
                         const embedding::EmbeddingStore& store,
                         const std::vector<predicates::Predicate>& preds,
                         const RankerConfig& model_cfg, const RankTrainConfig& cfg,
                         RankTrainStats* stats) {
  if (preds.size() < 10)
    throw std::invalid_argument("train_ranker: fewer than 10 training predicates");
  if (store.dim() != model_cfg.input_dim)
    throw std::invalid_argument("train_ranker: store dim != model input dim");

  auto positives = positive_pairs(preds);
  std::set<std::pair<std::string, std::string>> training_pairs(positives.begin(),
                                                               positives.end());
  for (const auto& [s, o] : positives)
    if (!store.has(s) || !store.has(o))
      throw std::invalid_argument("train_ranker: store does not cover pair " + s +
                                  " / " + o);
  if (positives.size() < 2)
    throw std::invalid_argument("train_ranker: fewer than 2 distinct pairs");

  Rng split_rng(derive_seed(cfg.seed, "ranker-split"));
  std::vector<std::size_t> order(positives.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  split_rng.shuffle(order);
  std::size_t val_n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(
             cfg.holdout_fraction * static_cast<double>(positives.size()))));
  val_n = std::min(val_n, positives.size() - 1);
  std::vector<std::size_t> val_idx(order.begin(),
                                   order.begin() + static_cast<long>(val_n));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(val_n),
                                     order.end());

  // Fixed validation batch keeps the loss comparable across epochs.
  Rng val_rng(derive_seed(cfg.seed, "ranker-val"));
  TrainingBatch val_batch =
      make_training_batch(positives, val_idx, g, training_pairs, cfg, val_rng);

  RankerModel model(model_cfg, cfg.seed);
  std::vector<Mat> accum = model.zero_grads();  // adagrad state
  constexpr double kEps = 1e-8;

  double val_loss = batch_loss_and_grads(model, store, val_batch, cfg.margin, nullptr);
  if (stats) {
    stats->initial_validation_loss = val_loss;
    stats->validation_losses.clear();
    stats->learning_rates.clear();
  }
  double best_loss = val_loss;
  int best_epoch = -1;
  std::vector<Mat> best_params = model.parameters();

  std::size_t per_epoch = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(
             cfg.epoch_fraction * static_cast<double>(train_idx.size()))));
  per_epoch = std::min(per_epoch, train_idx.size());

  std::size_t global_batch = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng epoch_rng(
        derive_seed(cfg.seed, "ranker-epoch", static_cast<std::uint64_t>(epoch)));
    epoch_rng.shuffle(train_idx);
    for (std::size_t off = 0; off < per_epoch; off += cfg.positives_per_batch) {
      std::size_t hi = std::min(per_epoch, off + cfg.positives_per_batch);
      std::span<const std::size_t> idx(train_idx.data() + off, hi - off);
      TrainingBatch batch =
          make_training_batch(positives, idx, g, training_pairs, cfg, epoch_rng);

      auto grads = model.zero_grads();
      batch_loss_and_grads(model, store, batch, cfg.margin, &grads);

      ++global_batch;
      double warm = cfg.warmup_batches == 0
                        ? 1.0
                        : std::min(1.0, static_cast<double>(global_batch) /
                                            static_cast<double>(cfg.warmup_batches));
      double lr = cfg.learning_rate * warm;
      if (stats) stats->learning_rates.push_back(lr);

      auto& params = model.parameters();
      for (std::size_t p = 0; p < params.size(); ++p)
        for (std::size_t i = 0; i < params[p].a.size(); ++i) {
          double gv = grads[p].a[i];
          if (gv == 0.0) continue;
          accum[p].a[i] += gv * gv;
          params[p].a[i] -= lr * gv / (std::sqrt(accum[p].a[i]) + kEps);
        }
    }

    val_loss = batch_loss_and_grads(model, store, val_batch, cfg.margin, nullptr);
    if (stats) stats->validation_losses.push_back(val_loss);
    // Ties go to the later epoch: the hinge loss saturates at zero long
    // before the margins stop widening.
    if (val_loss <= best_loss) {
      best_loss = val_loss;
      best_epoch = epoch;
      best_params = model.parameters();
    }
  }

  model.parameters() = std::move(best_params);
  if (stats) {
    stats->best_validation_loss = best_loss;
    stats->best_epoch = best_epoch;
  }
  return model;
}

// ---------------------------------------------------------------------------
// scoring

namespace {

std::string term_key(std::string_view term) {
  if (term.size() > 2 && term[0] == 'm' && term[1] == ':') return std::string(term);
  return graph::node_key(graph::NodeType::CodedTerm, term);
}

}  // namespace

PairScore score_pair(const RankerModel& model, const embedding::EmbeddingStore& store,
                     const graph::SemanticGraph& g, std::string_view term_a,
                     std::string_view term_b, int repeats, std::uint64_t seed,
                     std::size_t neighborhood) {
  if (repeats < 1) throw std::invalid_argument("score_pair: repeats must be >= 1");
  std::string a = term_key(term_a), b = term_key(term_b);
  if (!store.has(a)) throw std::out_of_range("unknown term: " + a);
  if (!store.has(b)) throw std::out_of_range("unknown term: " + b);

  double sum = 0.0, sum_sq = 0.0;
  for (int r = 0; r < repeats; ++r) {
    PairExample ex;
    ex.subj_key = a;
    ex.obj_key = b;
    ex.subj_neighborhood = graph::sample_neighborhood(
        g, a, neighborhood, derive_seed(seed, "nbhd-a", static_cast<std::uint64_t>(r)));
    ex.obj_neighborhood = graph::sample_neighborhood(
        g, b, neighborhood, derive_seed(seed, "nbhd-b", static_cast<std::uint64_t>(r)));
    double s = model.forward(build_sequence(ex, store));
    sum += s;
    sum_sq += s * s;
  }
  double n = static_cast<double>(repeats);
  PairScore out;
  out.mean = sum / n;
  double var = std::max(0.0, sum_sq / n - out.mean * out.mean);
  out.stddev = std::sqrt(var);
  return out;
}

std::vector<std::pair<std::string, double>> rank_candidates(
    const RankerModel& model, const embedding::EmbeddingStore& store,
    const graph::SemanticGraph& g, std::string_view source_term,
    const std::vector<std::string>& candidates, int repeats, std::uint64_t seed,
    std::size_t neighborhood, std::vector<std::string>* skipped) {
  if (candidates.empty()) throw std::invalid_argument("rank_candidates: no candidates");
  std::vector<std::pair<std::string, double>> out;
  for (const auto& c : candidates) {
    std::string key = term_key(c);
    if (!store.has(key)) {
      if (skipped) skipped->push_back(key);
      continue;
    }
    auto score = score_pair(model, store, g, source_term, key, repeats,
                            derive_seed(seed, key), neighborhood);
    out.emplace_back(key, score.mean);
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });
  return out;
}

}  // namespace hypgen::ranker
