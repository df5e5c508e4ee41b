#include "lunet/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "lunet/rng.hpp"

namespace lunet {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (learning_rate <= 0.0) throw ConfigError("train: learning_rate must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ConfigError("train: Adam betas must lie in [0,1)");
  if (epsilon <= 0.0) throw ConfigError("train: epsilon must be > 0");
  loss.weights.validate();
}

namespace {

void require_labeled(const std::vector<FundusSample>& set, const char* name) {
  if (set.empty())
    throw ConfigError(std::string("train: ") + name + " set is empty");
  for (const FundusSample& s : set)
    if (!s.has_label())
      throw ConfigError(std::string("train: ") + name + " sample '" + s.id +
                        "' has no label");
}

/// Stacks same-sized samples along the batch axis.
void stack_batch(const std::vector<FundusSample>& batch, Tensor& x,
                 Tensor& y) {
  const int64_t h = batch.front().image.h(), w = batch.front().image.w();
  const int64_t n = static_cast<int64_t>(batch.size());
  x = Tensor(n, batch.front().image.c(), h, w);
  y = Tensor(n, 3, h, w);
  for (int64_t i = 0; i < n; ++i) {
    const FundusSample& s = batch[static_cast<size_t>(i)];
    if (s.image.h() != h || s.image.w() != w)
      throw ShapeError("train: batch mixes sizes " + s.image.shape_str() +
                       " vs " + batch.front().image.shape_str());
    std::copy(s.image.data(), s.image.data() + s.image.size(),
              x.data() + i * s.image.size());
    std::copy(s.label.data(), s.label.data() + s.label.size(),
              y.data() + i * s.label.size());
  }
}

FundusSample pad_plain(const FundusSample& s, int64_t divisor) {
  FundusSample out = s;
  out.image = pad_to_multiple(s.image, divisor, nullptr);
  out.label = pad_to_multiple(s.label, divisor, nullptr);
  return out;
}

void adam_step(LUNet& model, AdamState& st) {
  ++st.step;
  const double bc1 =
      1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 =
      1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  size_t i = 0;
  model.for_each_param([&](Tensor& w, Tensor& g) {
    Tensor& m = st.m[i];
    Tensor& v = st.v[i];
    ++i;
    for (int64_t k = 0; k < w.size(); ++k) {
      m[k] = st.beta1 * m[k] + (1.0 - st.beta1) * g[k];
      v[k] = st.beta2 * v[k] + (1.0 - st.beta2) * g[k] * g[k];
      w[k] -= st.learning_rate * (m[k] / bc1) /
              (std::sqrt(v[k] / bc2) + st.epsilon);
    }
  });
}

double validate_terms(const LUNet& model,
                      const std::vector<FundusSample>& val_set,
                      const LossOptions& loss, LossBreakdown* terms) {
  require_labeled(val_set, "validation");
  const int64_t divisor = model.config().divisor();
  double total = 0.0;
  LossBreakdown acc;
  for (const FundusSample& s : val_set) {
    const FundusSample padded = pad_plain(s, divisor);
    const Tensor pred = model.forward(padded.image);
    LossBreakdown bd;
    total += lunet_loss(pred, padded.label, loss, &bd);
    acc += bd;
  }
  const double inv = 1.0 / static_cast<double>(val_set.size());
  acc *= inv;
  if (terms) *terms = acc;
  return total * inv;
}

std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void abort_nonfinite(const char* where, int64_t epoch,
                                  int64_t batch, const LossBreakdown& bd) {
  std::ostringstream msg;
  msg << "training aborted: non-finite " << where << " loss at epoch " << epoch
      << ", batch " << batch << " (bce=" << bd.bce << ", dice=" << bd.dice
      << ", cldice=" << bd.cldice << ", smooth=" << bd.smooth << ")";
  throw std::runtime_error(msg.str());
}

}  // namespace

double validate(const LUNet& model, const std::vector<FundusSample>& val_set,
                const LossOptions& loss) {
  return validate_terms(model, val_set, loss, nullptr);
}

void write_history(const std::string& path,
                   const std::vector<EpochStats>& history) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write history '" + tmp + "'");
    out << "epoch,train_loss,val_loss,train_bce,train_dice,train_cldice,"
           "train_smooth,val_bce,val_dice,val_cldice,val_smooth\n";
    for (const EpochStats& e : history)
      out << e.epoch << ',' << fmt_real(e.train_loss) << ','
          << fmt_real(e.val_loss) << ',' << fmt_real(e.train_terms.bce) << ','
          << fmt_real(e.train_terms.dice) << ','
          << fmt_real(e.train_terms.cldice) << ','
          << fmt_real(e.train_terms.smooth) << ',' << fmt_real(e.val_terms.bce)
          << ',' << fmt_real(e.val_terms.dice) << ','
          << fmt_real(e.val_terms.cldice) << ','
          << fmt_real(e.val_terms.smooth) << '\n';
    if (!out.good()) throw IoError("failed writing history '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::vector<EpochStats> read_history(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open history '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("epoch,train_loss,val_loss", 0) != 0)
    throw IoError("history '" + path + "': unrecognized header");
  std::vector<EpochStats> history;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<std::string> f;
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 11)
      throw IoError("history '" + path + "': bad row '" + line + "'");
    EpochStats e;
    e.epoch = std::stoll(f[0]);
    e.train_loss = std::stod(f[1]);
    e.val_loss = std::stod(f[2]);
    e.train_terms = {e.train_loss, std::stod(f[3]), std::stod(f[4]),
                     std::stod(f[5]), std::stod(f[6])};
    e.val_terms = {e.val_loss, std::stod(f[7]), std::stod(f[8]),
                   std::stod(f[9]), std::stod(f[10])};
    history.push_back(e);
  }
  return history;
}

TrainResult train(LUNet& model, const std::vector<FundusSample>& train_set,
                  const std::vector<FundusSample>& val_set,
                  const TrainConfig& cfg, TrainStart start) {
  cfg.validate();
  require_labeled(train_set, "train");
  require_labeled(val_set, "validation");
  if (start.start_epoch < 0 || start.start_epoch >= cfg.epochs)
    throw ConfigError("train: " + std::to_string(start.start_epoch) +
                      " epochs already done, target is " +
                      std::to_string(cfg.epochs));

  const int64_t divisor = model.config().divisor();
  AdamState adam = std::move(start.adam);
  if (adam.m.empty()) adam.init(model);
  adam.learning_rate = cfg.learning_rate;
  adam.beta1 = cfg.beta1;
  adam.beta2 = cfg.beta2;
  adam.epsilon = cfg.epsilon;

  CheckpointMeta meta = start.meta;
  std::vector<EpochStats> history = std::move(start.history);

  namespace fs = std::filesystem;
  const bool persist = !cfg.checkpoint_dir.empty();
  if (persist) fs::create_directories(cfg.checkpoint_dir);
  const std::string best_path =
      (fs::path(cfg.checkpoint_dir) / "best.ckpt").string();
  const std::string last_path =
      (fs::path(cfg.checkpoint_dir) / "last.ckpt").string();
  const std::string history_path =
      (fs::path(cfg.checkpoint_dir) / "history.csv").string();

  for (int64_t epoch = start.start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), size_t{0});
    Rng shuffle_rng(mix_seed(mix_seed(cfg.seed, hash_str("shuffle")),
                             static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    LossBreakdown term_sum;
    int64_t seen = 0;
    const int64_t n_batches =
        (static_cast<int64_t>(order.size()) + cfg.batch_size - 1) /
        cfg.batch_size;
    for (int64_t b = 0; b < n_batches; ++b) {
      std::vector<FundusSample> batch;
      const size_t lo = static_cast<size_t>(b * cfg.batch_size);
      const size_t hi =
          std::min(order.size(), lo + static_cast<size_t>(cfg.batch_size));
      if (cfg.augment_train) {
        AugmentOptions opts = cfg.augment;
        opts.pad_multiple = std::lcm(std::max<int64_t>(1, opts.pad_multiple),
                                     divisor);
        Rng size_rng(mix_seed(
            mix_seed(mix_seed(cfg.seed, hash_str("rescale")),
                     static_cast<uint64_t>(epoch)),
            static_cast<uint64_t>(b)));
        opts.forced_size = size_rng.range(opts.min_size, opts.max_size);
        for (size_t k = lo; k < hi; ++k) {
          const FundusSample& s = train_set[order[k]];
          const uint64_t aug_seed =
              mix_seed(mix_seed(mix_seed(cfg.seed, hash_str("augment")),
                                hash_str(s.id)),
                       static_cast<uint64_t>(epoch));
          batch.push_back(augment(s, opts, aug_seed));
        }
      } else {
        for (size_t k = lo; k < hi; ++k)
          batch.push_back(pad_plain(train_set[order[k]], divisor));
      }

      Tensor x, y;
      stack_batch(batch, x, y);
      Rng drop_rng(mix_seed(
          mix_seed(mix_seed(cfg.seed, hash_str("dropout")),
                   static_cast<uint64_t>(epoch)),
          static_cast<uint64_t>(b)));
      LUNet::Tape tape;
      const Tensor pred = model.forward_train(x, drop_rng, tape);
      LossBreakdown bd;
      Tensor grad;
      const double loss = lunet_loss(pred, y, cfg.loss, &bd, &grad);
      if (!std::isfinite(loss)) abort_nonfinite("train", epoch, b, bd);
      model.zero_grad();
      model.backward(grad, tape);
      adam_step(model, adam);

      const double bn = static_cast<double>(batch.size());
      loss_sum += loss * bn;
      bd *= bn;
      term_sum += bd;
      seen += static_cast<int64_t>(batch.size());
    }

    EpochStats stats;
    stats.epoch = epoch;
    const double inv = 1.0 / static_cast<double>(seen);
    stats.train_loss = loss_sum * inv;
    term_sum *= inv;
    stats.train_terms = term_sum;
    stats.val_loss = validate_terms(model, val_set, cfg.loss, &stats.val_terms);
    if (!std::isfinite(stats.val_loss))
      abort_nonfinite("validation", epoch, -1, stats.val_terms);
    history.push_back(stats);

    meta.epoch = epoch;
    if (stats.val_loss < meta.best_val_loss) {
      meta.best_val_loss = stats.val_loss;
      meta.best_epoch = epoch;
      if (persist) save_checkpoint(best_path, model, meta);
    }
    if (persist) {
      save_checkpoint(last_path, model, meta, &adam);
      write_history(history_path, history);
    }
    if (cfg.on_epoch) cfg.on_epoch(stats);
  }

  return {meta, std::move(history)};
}

ResumeBundle load_resume_bundle(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string last_path = (fs::path(dir) / "last.ckpt").string();
  const std::string history_path = (fs::path(dir) / "history.csv").string();
  ResumeBundle bundle;
  bundle.start.adam.m.clear();
  bundle.model =
      load_checkpoint(last_path, &bundle.start.meta, &bundle.start.adam);
  bundle.start.start_epoch = bundle.start.meta.epoch;
  if (fs::exists(history_path)) {
    bundle.start.history = read_history(history_path);
    // drop rows from after the checkpointed epoch, if any
    while (!bundle.start.history.empty() &&
           bundle.start.history.back().epoch > bundle.start.meta.epoch)
      bundle.start.history.pop_back();
  }
  return bundle;
}

}  // namespace lunet
