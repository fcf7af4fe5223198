#include "hypgen/embedding.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace hypgen::embedding {

// ---------------------------------------------------------------------------
// EmbeddingStore

EmbeddingStore::EmbeddingStore(std::size_t dim, std::vector<std::string> keys)
    : dim_(dim), keys_(std::move(keys)) {
  if (dim_ < 2) throw std::invalid_argument("embedding dim must be >= 2");
  rows_.reserve(keys_.size());
  for (std::size_t i = 0; i < keys_.size(); ++i) rows_.emplace(keys_[i], i);
  if (rows_.size() != keys_.size())
    throw std::invalid_argument("duplicate keys in embedding store");
  data_.assign(keys_.size() * dim_, 0.0);
  for (auto [a, b] : graph::kSchemaPairs) {
    transforms_[{a, b}] = std::vector<double>(dim_, 0.0);
    if (a != b) transforms_[{b, a}] = std::vector<double>(dim_, 0.0);
  }
}

bool EmbeddingStore::has(std::string_view key) const {
  return rows_.find(std::string(key)) != rows_.end();
}

std::size_t EmbeddingStore::row_of(std::string_view key) const {
  auto it = rows_.find(std::string(key));
  if (it == rows_.end())
    throw std::out_of_range("unknown embedding key: " + std::string(key));
  return it->second;
}

std::span<double> EmbeddingStore::transform(char from, char to) {
  auto it = transforms_.find({from, to});
  if (it == transforms_.end())
    throw std::out_of_range(std::string("no transform for type pair ") + from + to);
  return it->second;
}

std::span<const double> EmbeddingStore::transform(char from, char to) const {
  auto it = transforms_.find({from, to});
  if (it == transforms_.end())
    throw std::out_of_range(std::string("no transform for type pair ") + from + to);
  return it->second;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}
void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}
std::uint32_t get_u32(const std::string& s, std::size_t& pos) {
  if (pos + 4 > s.size()) throw std::runtime_error("embedding store truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
  pos += 4;
  return v;
}
std::uint64_t get_u64(const std::string& s, std::size_t& pos) {
  if (pos + 8 > s.size()) throw std::runtime_error("embedding store truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
  pos += 8;
  return v;
}
float get_f32(const std::string& s, std::size_t& pos) {
  std::uint32_t bits = get_u32(s, pos);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

constexpr std::string_view kMagic = "HGEB1";

}  // namespace

void EmbeddingStore::save(const std::string& path) const {
  std::string out;
  out.reserve(kMagic.size() + data_.size() * 4 + 64);
  out += kMagic;
  put_u32(out, static_cast<std::uint32_t>(dim_));
  put_u64(out, keys_.size());
  for (double x : data_) put_f32(out, static_cast<float>(x));
  put_u32(out, static_cast<std::uint32_t>(transforms_.size()));
  for (const auto& [pair, t] : transforms_) {
    out += pair.first;
    out += pair.second;
    for (double x : t) put_f32(out, static_cast<float>(x));
  }
  write_text_file(path, out);

  std::ostringstream manifest;
  for (std::size_t i = 0; i < keys_.size(); ++i) manifest << keys_[i] << '\t' << i << '\n';
  write_text_file(path + ".manifest.tsv", manifest.str());
}

EmbeddingStore EmbeddingStore::load(const std::string& path) {
  std::string raw = read_text_file(path);
  if (raw.size() < kMagic.size() || raw.compare(0, kMagic.size(), kMagic) != 0)
    throw std::runtime_error("not an embedding store (bad magic): " + path);
  std::size_t pos = kMagic.size();
  std::uint32_t dim = get_u32(raw, pos);
  std::uint64_t count = get_u64(raw, pos);

  std::vector<std::string> keys(count);
  {
    std::istringstream in(read_text_file(path + ".manifest.tsv"));
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto fields = split(line, '\t');
      if (fields.size() != 2) throw std::runtime_error("bad manifest line: " + line);
      std::size_t row = std::stoull(fields[1]);
      if (row >= count) throw std::runtime_error("manifest row out of range");
      keys.at(row) = fields[0];
      ++rows;
    }
    if (rows != count) throw std::runtime_error("manifest row count mismatch");
  }

  EmbeddingStore store(dim, std::move(keys));
  for (std::size_t i = 0; i < count * dim; ++i)
    store.data_[i] = get_f32(raw, pos);
  std::uint32_t tcount = get_u32(raw, pos);
  for (std::uint32_t i = 0; i < tcount; ++i) {
    if (pos + 2 > raw.size()) throw std::runtime_error("embedding store truncated");
    char from = raw[pos], to = raw[pos + 1];
    pos += 2;
    auto t = store.transform(from, to);
    for (std::size_t d = 0; d < dim; ++d) t[d] = get_f32(raw, pos);
  }
  return store;
}

// ---------------------------------------------------------------------------
// similarity and loss

double score_edge(std::span<const double> u, std::span<const double> v,
                  std::span<const double> t) {
  if (u.size() != v.size() || u.size() != t.size())
    throw std::invalid_argument("score_edge: vector length mismatch");
  if (u.empty()) throw std::invalid_argument("score_edge: empty vectors");
  double s = u[0] + v[0] + t[0];
  for (std::size_t i = 1; i < u.size(); ++i) s += u[i] * (v[i] + t[i]);
  return s;
}

double softmax_edge_loss(double pos_score, std::span<const double> neg_scores) {
  if (neg_scores.empty())
    throw std::invalid_argument("softmax_edge_loss: need at least one negative");
  double mx = pos_score;
  for (double s : neg_scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("non-finite negative score");
    mx = std::max(mx, s);
  }
  if (!std::isfinite(pos_score))
    throw std::invalid_argument("non-finite positive score");
  double denom = std::exp(pos_score - mx);
  for (double s : neg_scores) denom += std::exp(s - mx);
  return -(pos_score - mx - std::log(denom));
}

void EdgeLossGrads::resize(std::size_t dim, std::size_t negatives) {
  probs.assign(negatives + 1, 0.0);
  du.assign(dim, 0.0);
  dv_pos.assign(dim, 0.0);
  dv_negs.resize(negatives);
  for (auto& g : dv_negs) g.assign(dim, 0.0);
  dt.assign(dim, 0.0);
}

// Softmax probabilities over [positive, negatives...]; returns the loss.
static double edge_softmax(std::span<const double> u, std::span<const double> v_pos,
                           std::span<const std::span<const double>> v_negs,
                           std::span<const double> t, std::vector<double>& probs) {
  std::size_t k = v_negs.size();
  probs.assign(k + 1, 0.0);
  double s_pos = score_edge(u, v_pos, t);
  double mx = s_pos;
  probs[0] = s_pos;
  for (std::size_t j = 0; j < k; ++j) {
    probs[j + 1] = score_edge(u, v_negs[j], t);
    mx = std::max(mx, probs[j + 1]);
  }
  if (!std::isfinite(mx)) throw std::invalid_argument("non-finite edge score");
  double denom = 0.0;
  for (double& p : probs) {
    p = std::exp(p - mx);
    denom += p;
  }
  for (double& p : probs) p /= denom;
  return -std::log(probs[0]);
}

double edge_loss(std::span<const double> u, std::span<const double> v_pos,
                 std::span<const std::span<const double>> v_negs,
                 std::span<const double> t, EdgeLossGrads& grads) {
  std::size_t d = u.size();
  std::size_t k = v_negs.size();
  grads.resize(d, k);
  double loss = edge_softmax(u, v_pos, v_negs, t, grads.probs);
  const std::vector<double>& probs = grads.probs;

  // dL/dscore_pos = p0 - 1, dL/dscore_negj = p_{j+1}; chain through S.
  auto add_score_grad = [&](std::span<const double> v, double coeff,
                            std::span<double> dv) {
    grads.du[0] += coeff;
    dv[0] += coeff;
    grads.dt[0] += coeff;
    for (std::size_t i = 1; i < d; ++i) {
      grads.du[i] += coeff * (v[i] + t[i]);
      dv[i] += coeff * u[i];
      grads.dt[i] += coeff * u[i];
    }
  };
  add_score_grad(v_pos, probs[0] - 1.0, grads.dv_pos);
  for (std::size_t j = 0; j < k; ++j)
    add_score_grad(v_negs[j], probs[j + 1], grads.dv_negs[j]);
  return loss;
}

// ---------------------------------------------------------------------------
// negative sampling

namespace {

// Node ids grouped by layer, in id order (stable for a given graph).
std::array<std::vector<std::uint32_t>, 256> group_by_layer(
    const graph::SemanticGraph& g) {
  std::array<std::vector<std::uint32_t>, 256> layers;
  const auto& keys = g.keys();
  for (std::uint32_t i = 0; i < keys.size(); ++i)
    layers[static_cast<unsigned char>(keys[i][0])].push_back(i);
  return layers;
}

// Uniform draws from pool \ {exclude}: distinct when the pool is large
// enough, with replacement (flagged) otherwise.
void sample_from_pool(const std::vector<std::uint32_t>& pool, std::uint32_t exclude,
                      int count, Rng& rng, std::vector<std::uint32_t>& out,
                      bool* with_replacement) {
  out.clear();
  bool has_exclude =
      std::find(pool.begin(), pool.end(), exclude) != pool.end();
  std::size_t effective = pool.size() - (has_exclude ? 1 : 0);
  if (effective == 0)
    throw std::runtime_error("negative sampling: layer has a single node");
  auto draw = [&]() {
    std::uint32_t pick;
    do {
      pick = pool[static_cast<std::size_t>(rng.bounded(pool.size()))];
    } while (pick == exclude);
    return pick;
  };
  if (effective > static_cast<std::size_t>(count)) {
    std::unordered_set<std::uint32_t> used;
    used.reserve(static_cast<std::size_t>(count) * 2);
    while (out.size() < static_cast<std::size_t>(count)) {
      std::uint32_t pick = draw();
      if (used.insert(pick).second) out.push_back(pick);
    }
    if (with_replacement) *with_replacement = false;
  } else {
    for (int i = 0; i < count; ++i) out.push_back(draw());
    if (with_replacement) *with_replacement = true;
  }
}

}  // namespace

std::vector<std::uint32_t> sample_negatives(const graph::SemanticGraph& g,
                                            std::uint32_t target, int count,
                                            Rng& rng, bool* with_replacement) {
  if (count < 1) throw std::invalid_argument("sample_negatives: count must be >= 1");
  char layer = g.keys().at(target)[0];
  std::vector<std::uint32_t> pool;
  for (std::uint32_t i = 0; i < g.keys().size(); ++i)
    if (g.keys()[i][0] == layer) pool.push_back(i);
  std::vector<std::uint32_t> out;
  sample_from_pool(pool, target, count, rng, out, with_replacement);
  return out;
}

// ---------------------------------------------------------------------------
// training

EmbeddingStore train_embeddings(const graph::SemanticGraph& g,
                                const EmbedTrainConfig& cfg,
                                EmbedTrainStats* stats) {
  if (!g.frozen()) throw std::logic_error("train_embeddings: graph must be frozen");
  if (g.edge_count() == 0) throw std::invalid_argument("train_embeddings: empty graph");
  if (cfg.negatives < 1) throw std::invalid_argument("negatives must be >= 1");
  if (cfg.dim < 2) throw std::invalid_argument("dim must be >= 2");

  std::vector<std::string> keys = g.keys();
  std::sort(keys.begin(), keys.end());
  EmbeddingStore store(cfg.dim, std::move(keys));

  // id in graph -> row in store
  std::vector<std::size_t> row_of_id(g.keys().size());
  for (std::size_t i = 0; i < g.keys().size(); ++i)
    row_of_id[i] = store.row_of(g.keys()[i]);

  Rng init_rng(derive_seed(cfg.seed, "embed-init"));
  double half = 0.5 / static_cast<double>(cfg.dim);
  for (std::size_t r = 0; r < store.size(); ++r) {
    auto v = store.vec(r);
    for (double& x : v) x = init_rng.uniform(-half, half);
  }
  for (const auto& [pair, t] : store.transforms()) {
    auto tv = store.transform(pair.first, pair.second);
    for (double& x : tv) x = init_rng.uniform(-half, half);
  }

  // Adagrad accumulators.
  std::vector<double> v_accum(store.size() * cfg.dim, 0.0);
  constexpr double kAdagradEps = 1e-8;

  // Directed examples: (source id, target id), one per direction.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> directed;
  directed.reserve(g.edge_count() * 2);
  for (auto [a, b] : g.edges()) {
    directed.emplace_back(a, b);
    directed.emplace_back(b, a);
  }

  auto layers = group_by_layer(g);
  std::vector<std::span<const double>> neg_views;
  std::vector<std::uint32_t> negs;
  std::vector<double> probs;
  std::vector<double> du(cfg.dim, 0.0);
  std::vector<double> u_snap(cfg.dim, 0.0);
  bool any_replacement = false;

  // Closed-form gradients of the sampled softmax through score_edge: with the
  // softmax coefficients c = [p0-1, p1, ..., pk] (which sum to zero),
  //   dL/dv_k = c_k * [1, u_1, ..., u_{d-1}]
  //   dL/du   = [0, sum_k c_k v_k[1..]]   (the shared t contribution cancels)
  //   dL/dt   = 0.
  // Matches edge_loss; kept in fused form for the inner loop.
  Rng train_rng(derive_seed(cfg.seed, "embed-train"));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    train_rng.shuffle(directed);
    for (auto [src, dst] : directed) {
      char src_t = g.keys()[src][0];
      char dst_t = g.keys()[dst][0];

      // Same-layer corruption of the target node.
      const auto& pool = layers[static_cast<unsigned char>(dst_t)];
      bool with_repl = false;
      sample_from_pool(pool, dst, cfg.negatives, train_rng, negs, &with_repl);
      any_replacement |= with_repl;

      std::size_t u_row = row_of_id[src];
      std::size_t v_row = row_of_id[dst];
      neg_views.clear();
      for (std::uint32_t nid : negs) neg_views.push_back(store.vec(row_of_id[nid]));

      double loss = edge_softmax(store.vec(u_row), store.vec(v_row), neg_views,
                                 store.transform(src_t, dst_t), probs);
      if (stats) stats->loss_history.push_back(loss);

      // All gradients read pre-update values; u may itself be a sampled
      // negative on same-layer edges, so snapshot it.
      u_snap.assign(store.vec(u_row).begin(), store.vec(u_row).end());
      const double* uv = u_snap.data();
      double c_pos = probs[0] - 1.0;
      du[0] = 0.0;
      {
        const double* vp = store.vec(v_row).data();
        for (std::size_t i = 1; i < cfg.dim; ++i) du[i] = c_pos * vp[i];
        for (std::size_t j = 0; j < neg_views.size(); ++j) {
          const double* vn = neg_views[j].data();
          double pj = probs[j + 1];
          for (std::size_t i = 1; i < cfg.dim; ++i) du[i] += pj * vn[i];
        }
      }

      auto apply_target = [&](std::size_t row, double coeff) {
        auto v = store.vec(row);
        double* acc = v_accum.data() + row * cfg.dim;
        double g0 = coeff;
        acc[0] += g0 * g0;
        v[0] -= cfg.learning_rate * g0 / (std::sqrt(acc[0]) + kAdagradEps);
        for (std::size_t i = 1; i < cfg.dim; ++i) {
          double gg = coeff * uv[i];
          acc[i] += gg * gg;
          v[i] -= cfg.learning_rate * gg / (std::sqrt(acc[i]) + kAdagradEps);
        }
      };
      apply_target(v_row, c_pos);
      for (std::size_t j = 0; j < negs.size(); ++j)
        apply_target(row_of_id[negs[j]], probs[j + 1]);

      {
        auto v = store.vec(u_row);
        double* acc = v_accum.data() + u_row * cfg.dim;
        for (std::size_t i = 1; i < cfg.dim; ++i) {
          double gg = du[i];
          acc[i] += gg * gg;
          v[i] -= cfg.learning_rate * gg / (std::sqrt(acc[i]) + kAdagradEps);
        }
      }
    }
  }
  if (stats) stats->sampled_with_replacement = any_replacement;
  return store;
}

}  // namespace hypgen::embedding
