#pragma once

// Skip-gram word embeddings trained with negative sampling.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "rolerel/corpus.hpp"
#include "rolerel/random.hpp"

namespace rolerel {

class EmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Vocabulary

/// Distinct words ordered by descending count, ties in lexicographic order.
class Vocabulary {
 public:
  Vocabulary() = default;

  Vocabulary(std::vector<std::string> words, std::vector<std::uint64_t> counts)
      : words_(std::move(words)), counts_(std::move(counts)) {
    if (words_.size() != counts_.size()) {
      throw EmbeddingError("vocabulary words and counts differ in length");
    }
    for (std::size_t i = 0; i < words_.size(); ++i) {
      if (!index_.emplace(words_[i], i).second) {
        throw EmbeddingError("duplicate vocabulary word \"" + words_[i] + "\"");
      }
    }
  }

  std::size_t size() const noexcept { return words_.size(); }
  bool empty() const noexcept { return words_.empty(); }

  const std::string& word(std::size_t i) const { return words_.at(i); }
  std::uint64_t count(std::size_t i) const { return counts_.at(i); }
  const std::vector<std::string>& words() const noexcept { return words_; }
  const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }

  std::optional<std::size_t> find(std::string_view w) const {
    const auto it = index_.find(std::string(w));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::uint64_t total_count() const noexcept {
    std::uint64_t total = 0;
    for (auto c : counts_) total += c;
    return total;
  }

 private:
  std::vector<std::string> words_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline Vocabulary build_vocabulary(const Corpus& corpus,
                                   std::uint64_t min_count) {
  if (corpus.empty()) throw EmbeddingError("corpus is empty");
  std::map<std::string, std::uint64_t> counts;
  for (const auto& sentence : corpus) {
    for (const auto& token : sentence) ++counts[token];
  }
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (auto& [word, count] : counts) {
    if (count >= min_count) kept.emplace_back(word, count);
  }
  if (kept.empty()) {
    throw EmbeddingError("no word occurs at least min_count=" +
                         std::to_string(min_count) + " times");
  }
  // std::map iteration is already lexicographic, so a stable sort on count
  // yields the tie-break for free.
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;
  });
  std::vector<std::string> words;
  std::vector<std::uint64_t> word_counts;
  for (auto& [word, count] : kept) {
    words.push_back(std::move(word));
    word_counts.push_back(count);
  }
  return Vocabulary(std::move(words), std::move(word_counts));
}

// ---------------------------------------------------------------------------
// Configuration

struct EmbeddingConfig {
  int dim = 30;
  int window = 5;
  int negatives = 5;
  int epochs = 20;
  double lr_initial = 0.025;
  double lr_final = 0.0001;
  std::uint64_t min_count = 1;
  double unigram_power = 0.75;
  /// Frequent-word subsampling threshold; 0 disables it.
  double subsample = 0.0;
  std::uint64_t seed = 1;
  /// More than one thread trades bit-reproducibility for speed.
  int threads = 1;

  void validate() const {
    if (dim < 2) throw std::invalid_argument("dim must be >= 2");
    if (window < 1) throw std::invalid_argument("window must be >= 1");
    if (negatives < 1) throw std::invalid_argument("negatives must be >= 1");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (!(lr_initial > 0.0)) throw std::invalid_argument("lr_initial must be > 0");
    if (!(lr_final > 0.0)) throw std::invalid_argument("lr_final must be > 0");
    if (!(lr_final < lr_initial)) {
      throw std::invalid_argument("lr_final must be < lr_initial");
    }
    if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
    if (subsample < 0.0) throw std::invalid_argument("subsample must be >= 0");
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Dense row-major matrix

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  void clear() {
    rows_ = cols_ = 0;
    data_.clear();
    data_.shrink_to_fit();
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// ---------------------------------------------------------------------------
// Negative sampling

/// Draws word ordinals with probability proportional to count^power, by
/// inverse-CDF lookup over the exact cumulative weights.
class NegativeSampler {
 public:
  NegativeSampler(const Vocabulary& vocab, double power) {
    if (vocab.empty()) throw EmbeddingError("cannot sample from empty vocabulary");
    cumulative_.reserve(vocab.size());
    double total = 0.0;
    for (auto c : vocab.counts()) {
      total += std::pow(static_cast<double>(c), power);
      cumulative_.push_back(total);
    }
  }

  std::size_t size() const noexcept { return cumulative_.size(); }

  double probability(std::size_t i) const {
    const double prev = i == 0 ? 0.0 : cumulative_[i - 1];
    return (cumulative_[i] - prev) / cumulative_.back();
  }

  std::size_t sample(Rng& rng) const {
    const double u = rng.uniform() * cumulative_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return std::min<std::size_t>(it - cumulative_.begin(), cumulative_.size() - 1);
  }

 private:
  std::vector<double> cumulative_;
};

inline std::size_t negative_sample(const NegativeSampler& sampler, Rng& rng) {
  return sampler.sample(rng);
}

// ---------------------------------------------------------------------------
// Skip-gram negative-sampling objective

namespace detail {

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// -log(sigmoid(x)), stable for large |x|.
inline double neg_log_sigmoid(double x) {
  if (x >= 0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

}  // namespace detail

struct PairGradients {
  double loss = 0.0;
  std::vector<double> center;
  std::vector<double> context;
  std::vector<std::vector<double>> negatives;
};

/// Loss and exact gradients of
///   -log s(u_ctx . v) - sum_j log s(-u_neg_j . v)
/// where v is the center (input) vector, u the output vectors and s the
/// logistic function. Results are written into `out` so callers can reuse
/// its buffers across calls.
inline void pair_loss_and_gradients(
    std::span<const double> center, std::span<const double> context,
    std::span<const std::span<const double>> negatives, PairGradients& out) {
  const std::size_t d = center.size();
  if (context.size() != d) {
    throw std::invalid_argument("context vector dimension mismatch");
  }
  if (negatives.empty()) {
    throw std::invalid_argument("at least one negative vector is required");
  }
  for (const auto& neg : negatives) {
    if (neg.size() != d) {
      throw std::invalid_argument("negative vector dimension mismatch");
    }
  }

  out.center.assign(d, 0.0);
  out.context.resize(d);
  out.negatives.resize(negatives.size());

  const double pos_score = dot(context, center);
  const double pos_coeff = detail::sigmoid(pos_score) - 1.0;
  out.loss = detail::neg_log_sigmoid(pos_score);
  for (std::size_t i = 0; i < d; ++i) {
    out.context[i] = pos_coeff * center[i];
    out.center[i] += pos_coeff * context[i];
  }
  for (std::size_t j = 0; j < negatives.size(); ++j) {
    const auto& neg = negatives[j];
    const double score = dot(neg, center);
    const double coeff = detail::sigmoid(score);
    out.loss += detail::neg_log_sigmoid(-score);
    auto& g = out.negatives[j];
    g.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
      g[i] = coeff * center[i];
      out.center[i] += coeff * neg[i];
    }
  }
}

inline PairGradients pair_loss_and_gradients(
    std::span<const double> center, std::span<const double> context,
    std::span<const std::span<const double>> negatives) {
  PairGradients out;
  pair_loss_and_gradients(center, context, negatives, out);
  return out;
}

// ---------------------------------------------------------------------------
// Model

struct EmbeddingModel {
  Vocabulary vocab;
  Matrix input;   // word vectors
  Matrix output;  // context vectors; dropped by finalize()
  bool finalized = false;
  std::vector<double> epoch_mean_loss;
  std::vector<std::string> warnings;

  std::size_t dim() const noexcept { return input.cols(); }

  std::span<const double> vector(std::size_t i) const { return input.row(i); }

  std::optional<std::span<const double>> vector(std::string_view word) const {
    const auto i = vocab.find(word);
    if (!i) return std::nullopt;
    return input.row(*i);
  }
};

namespace detail {

inline std::vector<std::vector<std::size_t>> encode_corpus(
    const Corpus& corpus, const Vocabulary& vocab) {
  std::vector<std::vector<std::size_t>> encoded;
  encoded.reserve(corpus.size());
  for (const auto& sentence : corpus) {
    std::vector<std::size_t> ids;
    ids.reserve(sentence.size());
    for (const auto& token : sentence) {
      if (const auto i = vocab.find(token)) ids.push_back(*i);
    }
    encoded.push_back(std::move(ids));
  }
  return encoded;
}

inline std::vector<double> keep_probabilities(const Vocabulary& vocab,
                                              double threshold) {
  std::vector<double> keep(vocab.size(), 1.0);
  if (threshold <= 0.0) return keep;
  const double total = static_cast<double>(vocab.total_count());
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const double f = static_cast<double>(vocab.count(i)) / total;
    keep[i] = std::min(1.0, (std::sqrt(f / threshold) + 1.0) * threshold / f);
  }
  return keep;
}

/// Visits every (center, context) position pair of one sentence in training
/// order. The window radius is drawn from `window_rng` per center position.
template <typename Visit>
void for_each_pair(std::span<const std::size_t> sentence, int window,
                   Rng& window_rng, Visit&& visit) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(sentence.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto b = static_cast<std::ptrdiff_t>(window_rng.below(window)) + 1;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - b);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, i + b);
    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
      if (j != i) visit(sentence[i], sentence[j]);
    }
  }
}

inline std::vector<std::size_t> subsampled(std::span<const std::size_t> sentence,
                                           std::span<const double> keep,
                                           Rng& rng, bool enabled) {
  if (!enabled) return {sentence.begin(), sentence.end()};
  std::vector<std::size_t> out;
  for (auto w : sentence) {
    if (keep[w] >= 1.0 || rng.uniform() < keep[w]) out.push_back(w);
  }
  return out;
}

}  // namespace detail

/// Trains skip-gram vectors with negative sampling. The returned model is not
/// finalized. With config.threads == 1 the result is bit-reproducible for a
/// fixed seed.
inline EmbeddingModel train_skipgram(const Corpus& corpus,
                                     const EmbeddingConfig& config) {
  config.validate();
  EmbeddingModel model;
  model.vocab = build_vocabulary(corpus, config.min_count);
  const std::size_t vocab_size = model.vocab.size();
  if (vocab_size < 2) {
    throw EmbeddingError("vocabulary needs at least two words for negative sampling");
  }
  const auto d = static_cast<std::size_t>(config.dim);

  Rng init_rng(derive_seed(config.seed, "init"));
  model.input = Matrix(vocab_size, d);
  for (double& x : model.input.data()) {
    x = init_rng.uniform(-0.5, 0.5) / static_cast<double>(d);
  }
  model.output = Matrix(vocab_size, d, 0.0);

  const auto encoded = detail::encode_corpus(corpus, model.vocab);
  const NegativeSampler sampler(model.vocab, config.unigram_power);
  const auto keep = detail::keep_probabilities(model.vocab, config.subsample);
  const bool subsampling = config.subsample > 0.0;

  // Window and subsampling draws come from streams seeded per (epoch,
  // sentence), so the pair count can be computed exactly up front and the
  // schedule does not depend on thread partitioning.
  const auto stream_seed = [&](std::string_view tag, int epoch, std::size_t s) {
    return derive_seed(derive_seed(derive_seed(config.seed, tag),
                                   static_cast<std::uint64_t>(epoch)),
                       static_cast<std::uint64_t>(s));
  };

  std::vector<std::uint64_t> epoch_pairs(config.epochs, 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t s = 0; s < encoded.size(); ++s) {
      Rng sub_rng(stream_seed("subsample", epoch, s));
      Rng window_rng(stream_seed("window", epoch, s));
      const auto sentence = detail::subsampled(encoded[s], keep, sub_rng, subsampling);
      detail::for_each_pair(sentence, config.window, window_rng,
                            [&](std::size_t, std::size_t) { ++epoch_pairs[epoch]; });
    }
  }
  std::uint64_t total_pairs = 0;
  for (auto p : epoch_pairs) total_pairs += p;
  if (total_pairs == 0) {
    throw EmbeddingError("corpus yields no center-context pairs");
  }

  const double lr_span = config.lr_initial - config.lr_final;
  const auto learning_rate = [&](std::uint64_t done) {
    return config.lr_initial -
           lr_span * static_cast<double>(done) / static_cast<double>(total_pairs);
  };

  const auto k = static_cast<std::size_t>(config.negatives);
  const int threads = std::max(1, std::min<int>(config.threads,
                                                static_cast<int>(encoded.size())));
  model.epoch_mean_loss.assign(config.epochs, 0.0);
  std::uint64_t pairs_before_epoch = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<double> worker_loss(threads, 0.0);

    const auto run_worker = [&](int worker) {
      Rng neg_rng(derive_seed(derive_seed(config.seed, "negatives"),
                              static_cast<std::uint64_t>(epoch * threads + worker)));
      PairGradients grads;
      std::vector<std::span<const double>> neg_views(k);
      std::vector<std::size_t> neg_ids(k);
      // Local copies of the rows touched by one step; in multi-threaded mode
      // rows are read and written through relaxed atomics.
      std::vector<double> center_buf(d), context_buf(d), neg_buf(k * d);
      // Single-threaded progress is exact; workers extrapolate from their
      // own share of the epoch.
      std::uint64_t done = pairs_before_epoch;
      const auto load = [&](std::span<double> row, std::span<double> dst) {
        if (threads == 1) {
          std::copy(row.begin(), row.end(), dst.begin());
        } else {
          for (std::size_t i = 0; i < d; ++i) {
            dst[i] = std::atomic_ref<double>(row[i]).load(std::memory_order_relaxed);
          }
        }
      };
      const auto add = [&](std::span<double> row, std::span<const double> g,
                           double step) {
        if (threads == 1) {
          for (std::size_t i = 0; i < d; ++i) row[i] -= step * g[i];
        } else {
          for (std::size_t i = 0; i < d; ++i) {
            std::atomic_ref<double> cell(row[i]);
            cell.store(cell.load(std::memory_order_relaxed) - step * g[i],
                       std::memory_order_relaxed);
          }
        }
      };

      double loss_sum = 0.0;
      std::uint64_t local_pairs = 0;
      for (std::size_t s = static_cast<std::size_t>(worker); s < encoded.size();
           s += static_cast<std::size_t>(threads)) {
        Rng sub_rng(stream_seed("subsample", epoch, s));
        Rng window_rng(stream_seed("window", epoch, s));
        const auto sentence =
            detail::subsampled(encoded[s], keep, sub_rng, subsampling);
        detail::for_each_pair(
            sentence, config.window, window_rng,
            [&](std::size_t center, std::size_t context) {
              for (std::size_t j = 0; j < k; ++j) {
                std::size_t n;
                do {
                  n = sampler.sample(neg_rng);
                } while (n == context);
                neg_ids[j] = n;
                load(model.output.row(n), {neg_buf.data() + j * d, d});
                neg_views[j] = {neg_buf.data() + j * d, d};
              }
              load(model.input.row(center), center_buf);
              load(model.output.row(context), context_buf);
              pair_loss_and_gradients(center_buf, context_buf, neg_views, grads);

              const double lr =
                  learning_rate(threads == 1 ? done : done + local_pairs * threads);
              add(model.input.row(center), grads.center, lr);
              add(model.output.row(context), grads.context, lr);
              for (std::size_t j = 0; j < k; ++j) {
                add(model.output.row(neg_ids[j]), grads.negatives[j], lr);
              }
              loss_sum += grads.loss;
              ++local_pairs;
              if (threads == 1) ++done;
            });
      }
      worker_loss[worker] = loss_sum;
    };

    if (threads == 1) {
      run_worker(0);
    } else {
      std::vector<std::jthread> pool;
      for (int w = 0; w < threads; ++w) pool.emplace_back(run_worker, w);
    }

    double epoch_loss = 0.0;
    for (double l : worker_loss) epoch_loss += l;
    model.epoch_mean_loss[epoch] =
        epoch_pairs[epoch] == 0 ? 0.0
                                : epoch_loss / static_cast<double>(epoch_pairs[epoch]);
    pairs_before_epoch += epoch_pairs[epoch];
  }
  return model;
}

/// Projects every word vector onto the unit hypersphere and drops the output
/// vectors. A zero vector becomes e_1 and a warning is recorded.
inline EmbeddingModel finalize(EmbeddingModel model) {
  if (model.finalized) throw EmbeddingError("model is already finalized");
  for (std::size_t w = 0; w < model.input.rows(); ++w) {
    auto row = model.input.row(w);
    const double norm = std::sqrt(dot(row, row));
    if (norm > 0.0 && std::isfinite(norm)) {
      for (double& x : row) x /= norm;
    } else {
      std::fill(row.begin(), row.end(), 0.0);
      row[0] = 1.0;
      model.warnings.push_back("word \"" + model.vocab.word(w) +
                               "\" had a degenerate vector; replaced by e_1");
    }
  }
  model.output.clear();
  model.finalized = true;
  return model;
}

struct Neighbor {
  std::string word;
  double similarity;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Top-k words by cosine similarity to `seed_word`, excluding the word itself.
/// Ties keep vocabulary order.
inline std::vector<Neighbor> nearest_neighbors(const EmbeddingModel& model,
                                               std::string_view seed_word,
                                               std::size_t k) {
  if (!model.finalized) throw EmbeddingError("model is not finalized");
  const auto seed = model.vocab.find(seed_word);
  if (!seed) {
    throw EmbeddingError("word \"" + std::string(seed_word) +
                         "\" is not in the vocabulary");
  }
  const auto query = model.input.row(*seed);
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(model.vocab.size());
  for (std::size_t w = 0; w < model.vocab.size(); ++w) {
    if (w != *seed) scored.emplace_back(dot(query, model.input.row(w)), w);
  }
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + take, scored.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });
  std::vector<Neighbor> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.push_back({model.vocab.word(scored[i].second), scored[i].first});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text persistence: "<V> <dim>" header, then "<word> <x_1> ... <x_dim>".

inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline void save_embeddings(std::ostream& out, const EmbeddingModel& model) {
  out << model.vocab.size() << ' ' << model.dim() << '\n';
  for (std::size_t w = 0; w < model.vocab.size(); ++w) {
    out << model.vocab.word(w);
    for (double x : model.input.row(w)) out << ' ' << format_double(x);
    out << '\n';
  }
}

/// Loads a finalized model. Counts are not stored in the text format, so the
/// loaded vocabulary carries descending placeholder counts that preserve the
/// file's row order.
inline EmbeddingModel load_embeddings(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw EmbeddingError("embedding file is empty");
  std::size_t vocab_size = 0, dim = 0;
  {
    std::istringstream header(line);
    std::string extra;
    if (!(header >> vocab_size >> dim) || (header >> extra) || dim == 0) {
      throw EmbeddingError("line 1: malformed header, expected \"<V> <dim>\"");
    }
  }
  EmbeddingModel model;
  model.input = Matrix(vocab_size, dim);
  std::vector<std::string> words;
  words.reserve(vocab_size);
  std::size_t line_no = 1;
  while (words.size() < vocab_size && std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) {
      throw EmbeddingError("line " + std::to_string(line_no) + ": missing word");
    }
    auto row = model.input.row(words.size());
    std::size_t n = 0;
    std::string value;
    while (fields >> value) {
      if (n == dim) {
        throw EmbeddingError("line " + std::to_string(line_no) +
                             ": more than " + std::to_string(dim) + " values");
      }
      const auto res =
          std::from_chars(value.data(), value.data() + value.size(), row[n]);
      if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
        throw EmbeddingError("line " + std::to_string(line_no) +
                             ": invalid number \"" + value + "\"");
      }
      ++n;
    }
    if (n != dim) {
      throw EmbeddingError("line " + std::to_string(line_no) + ": expected " +
                           std::to_string(dim) + " values, got " +
                           std::to_string(n));
    }
    words.push_back(std::move(word));
  }
  if (words.size() != vocab_size) {
    throw EmbeddingError("header declares " + std::to_string(vocab_size) +
                         " words but file has " + std::to_string(words.size()));
  }
  while (std::getline(in, line)) {
    if (!detail::trim(line).empty()) {
      throw EmbeddingError("trailing data after " + std::to_string(vocab_size) +
                           " word lines");
    }
  }
  std::vector<std::uint64_t> counts(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) counts[i] = vocab_size - i;
  try {
    model.vocab = Vocabulary(std::move(words), std::move(counts));
  } catch (const EmbeddingError& e) {
    throw EmbeddingError(std::string("embedding file: ") + e.what());
  }
  model.finalized = true;
  return model;
}

}  // namespace rolerel
