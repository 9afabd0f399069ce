// SPDX-License-Identifier: Apache-2.0
#include "geomanifold/training.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "geomanifold/error.hpp"
#include "geomanifold/optim.hpp"

namespace gm {

SegmentRefs refs(const std::vector<EEGRecording>& segs) {
  SegmentRefs out;
  out.reserve(segs.size());
  for (const auto& s : segs) out.push_back(&s);
  return out;
}

namespace {

std::vector<EEGRecording> augment(std::span<const EEGRecording* const> segs, const TrainSchedule& t,
                                  Rng& rng) {
  std::vector<EEGRecording> out;
  out.reserve(segs.size());
  for (const EEGRecording* s : segs) {
    EEGRecording a = *s;
    double m = 0.0, m2 = 0.0;
    for (float v : a.data) {
      m += v;
      m2 += static_cast<double>(v) * v;
    }
    const double n = static_cast<double>(a.data.size());
    const double sd = std::sqrt(std::max(0.0, m2 / n - (m / n) * (m / n)));
    const double gain = rng.uniform(1.0 - t.augment_scale, 1.0 + t.augment_scale);
    for (float& v : a.data) v = static_cast<float>(gain * v + t.augment_noise * sd * rng.normal());
    out.push_back(std::move(a));
  }
  return out;
}

Tensor normal_tensor(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t = Tensor::zeros(r, c);
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

Var cross_entropy(Tape& tape, Var logits, std::span<const EEGRecording* const> segs) {
  Tensor onehot = Tensor::zeros(logits.rows(), logits.cols());
  for (std::size_t b = 0; b < segs.size(); ++b) {
    if (!segs[b]->label) throw UsageError("fine-tuning needs labelled segments");
    if (*segs[b]->label >= logits.cols())
      throw UsageError("label " + std::to_string(*segs[b]->label) + " outside the model's classes");
    onehot.at(b, *segs[b]->label) = 1.0;
  }
  return scale(sum(mul(log_softmax_rows(logits), tape.constant(std::move(onehot)))),
               -1.0 / static_cast<double>(segs.size()));
}

double scalar(Var v) { return v.valid() ? v.value()[0] : 0.0; }

struct StepTerms {
  Var loss;
  Var recon, geo, align, dynamics, ce;
};

using StepFn = std::function<StepTerms(Tape&, std::span<const EEGRecording* const>)>;

std::vector<EpochLog> run_stage(Model& model, std::span<const EEGRecording* const> data,
                                std::size_t epochs, const char* name,
                                std::vector<Parameter*> params, const StepFn& step,
                                const EpochCallback& on_epoch,
                                const std::function<void()>& before_epoch = {}) {
  const auto& cfg = model.config();
  if (data.empty()) throw UsageError(std::string(name) + ": no training data");
  Rng order_rng = Rng::stream(cfg.seed, std::string("batches.") + name);
  AdamWState opt;
  opt.config.lr = cfg.train.lr;
  opt.config.weight_decay = cfg.train.weight_decay;

  std::vector<std::size_t> order(data.size());
  std::vector<EpochLog> logs;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);

    if (before_epoch) before_epoch();
    EpochLog log;
    log.epoch = epoch;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.train.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.train.batch_size);
      SegmentRefs batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);

      Tape tape;
      StepTerms t = step(tape, batch);
      const double loss = scalar(t.loss);
      if (!std::isfinite(loss))
        throw TrainingError(std::string(name) + ": non-finite loss at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(n_batches + 1));
      model.params().zero_grad();
      tape.backprop(t.loss);
      try {
        adamw_step(params, opt);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(name) + ": epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(n_batches + 1) + ": " + e.what());
      }
      log.loss += loss;
      log.recon += scalar(t.recon);
      log.geo += scalar(t.geo);
      log.align += scalar(t.align);
      log.dynamics += scalar(t.dynamics);
      log.ce += scalar(t.ce);
      ++n_batches;
    }
    const double inv = 1.0 / static_cast<double>(n_batches);
    for (double* v : {&log.loss, &log.recon, &log.geo, &log.align, &log.dynamics, &log.ce}) *v *= inv;
    logs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return logs;
}

// Deterministic latents for a batch, time-major.
Var batch_latents(const Model& model, Tape& tape, std::span<const EEGRecording* const> segs) {
  Var x = tape.constant(patchify(segs, model.config().vae.patch_len));
  return model.vae.reparameterize(tape, model.vae.encode(tape, x), nullptr);
}

// Rows of time-major latents moved by their segment's subject map; subjects
// without a map pass through.
Var aligned_latents(const Model& model, Var z, std::span<const EEGRecording* const> segs,
                    const SubjectMaps& maps) {
  Tape& tape = z.tape();
  const std::size_t b = segs.size(), d = z.cols();
  std::map<std::uint32_t, std::vector<std::size_t>> rows;
  for (std::size_t r = 0; r < z.rows(); ++r) rows[segs[r % b]->subject_id].push_back(r);
  std::vector<Var> parts;
  std::vector<std::size_t> order;
  for (const auto& [id, idx] : rows) {
    Var g = take_rows(z, idx);
    if (auto it = maps.find(id); it != maps.end()) {
      const AlignmentMap& m = it->second;
      Tensor shift = Tensor::zeros(idx.size(), d);
      for (std::size_t i = 0; i < d; ++i) {
        double v = m.target_centroid[i];
        for (std::size_t j = 0; j < d; ++j) v -= m.rotation.at(i, j) * m.source_centroid[j];
        for (std::size_t r = 0; r < idx.size(); ++r) shift.at(r, i) = v;
      }
      g = add(matmul_nt(g, tape.constant(m.rotation)), tape.constant(std::move(shift)));
    }
    parts.push_back(g);
    order.insert(order.end(), idx.begin(), idx.end());
  }
  std::vector<std::size_t> inverse(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) inverse[order[i]] = i;
  Var out = take_rows(concat_rows(parts), inverse);
  if (model.manifold() != nullptr)
    out = project_rows(out, model.geometry(), model.config().vae.manifold.boundary_margin);
  return out;
}

Var next_latent_loss(const Model& model, Var fused, Var z, std::size_t batch) {
  const std::size_t n = fused.rows();
  if (n <= batch) return {};
  Tape& tape = fused.tape();
  Var pred = slice_rows(fused, 0, n - batch);
  Var target = tape.constant(z.value());
  target = slice_rows(target, batch, n - batch);
  return mean(square(row_distance(pred, target, model.geometry())));
}

Tensor time_to_segment_major(const Tensor& z, std::size_t batch) {
  const std::size_t p = z.rows() / batch, d = z.cols();
  Tensor out = Tensor::zeros(z.rows(), d);
  for (std::size_t t = 0; t < p; ++t)
    for (std::size_t b = 0; b < batch; ++b)
      std::copy_n(z.row(t * batch + b).begin(), d, out.row(b * p + t).begin());
  return out;
}

}  // namespace

std::vector<EpochLog> pretrain(Model& model, std::span<const EEGRecording* const> data,
                               const EpochCallback& on_epoch) {
  const auto& cfg = model.config();
  model.params().set_trainable("", true);
  Rng eps_rng = Rng::stream(cfg.seed, "eps.pretrain");
  const Tensor zero = Tensor::scalar(0.0);
  auto step = [&](Tape& tape, std::span<const EEGRecording* const> batch) {
    const Tensor patches = patchify(batch, cfg.vae.patch_len);
    Var x = tape.constant(patches);
    EncoderOutput enc = model.vae.encode(tape, x);
    const Tensor eps = normal_tensor(patches.rows(), cfg.vae.latent_dim, eps_rng);
    Var z = model.vae.reparameterize(tape, enc, &eps);
    StepTerms t;
    t.recon = vae_loss(x, model.vae.decode(tape, z), enc, cfg.vae.kl_weight, batch.size());
    t.geo = patches.rows() >= 2 ? geo_loss_auto(z, patches, model.geometry(), cfg.loss.geo_target)
                                : tape.constant(zero);
    t.loss = total_loss(t.recon, t.geo, tape.constant(zero), cfg.loss);
    return t;
  };
  auto logs = run_stage(model, data, cfg.train.epochs_pretrain, "pretrain",
                        model.params().with_prefix("vae."), step, on_epoch);
  model.stage = Stage::pretrained;
  return logs;
}

std::vector<EpochLog> train_transformer(Model& model, std::span<const EEGRecording* const> data,
                                        const EpochCallback& on_epoch) {
  if (model.stage != Stage::pretrained)
    throw UsageError(std::string("transformer training needs stage-1 weights, got stage '") +
                     to_string(model.stage) + "'");
  const auto& cfg = model.config();
  auto& store = model.params();
  store.set_trainable("", true);
  for (const char* p : {"vae.enc.", "vae.mu.", "vae.logvar."}) store.set_trainable(p, false);
  std::vector<Parameter*> params;
  for (Parameter* p : store.all())
    if (p->trainable && p->name.rfind("head.", 0) != 0) params.push_back(p);

  Rng aug_rng = Rng::stream(cfg.seed, "augment.transformer");
  auto step = [&](Tape& tape, std::span<const EEGRecording* const> batch) {
    const std::size_t b = batch.size();
    const Tensor patches = patchify(batch, cfg.vae.patch_len);
    Var x = tape.constant(patches);
    Var z = model.vae.reparameterize(tape, model.vae.encode(tape, x), nullptr);
    Var y = model.tokens(tape, z, b);

    const auto aug = augment(batch, cfg.train, aug_rng);
    const SegmentRefs aug_refs = refs(aug);
    Var y2 = model.tokens(tape, batch_latents(model, tape, aug_refs), b);

    StepTerms t;
    t.recon = mean(square(sub(model.vae.decode(tape, z), x)));
    t.geo = geo_loss_auto(y, patches, model.geometry(), cfg.loss.geo_target);
    t.align = align_loss(model.pool(tape, y, b), model.pool(tape, y2, b), cfg.loss.tau);
    t.loss = total_loss(t.recon, t.geo, t.align, cfg.loss);
    if (model.uses_dynamics()) {
      t.dynamics = next_latent_loss(model, model.representation(tape, y, b), z, b);
      if (t.dynamics.valid()) t.loss = add(t.loss, t.dynamics);
    }
    return t;
  };
  auto logs = run_stage(model, data, cfg.train.epochs_transformer, "transformer", params, step,
                        on_epoch);
  store.set_trainable("", true);
  model.stage = Stage::transformer;
  return logs;
}

std::vector<EpochLog> finetune(Model& model, std::span<const EEGRecording* const> data,
                               const EpochCallback& on_epoch) {
  if (model.stage != Stage::transformer)
    throw UsageError(std::string("fine-tuning needs stage-2 weights, got stage '") +
                     to_string(model.stage) + "'");
  for (const EEGRecording* s : data)
    if (!s->label) throw UsageError("fine-tuning needs labelled data");
  const auto& cfg = model.config();
  model.params().set_trainable("", true);
  Rng aug_rng = Rng::stream(cfg.seed, "augment.finetune");
  const std::size_t n_cal = cfg.eval.calibration_segments;
  bool align = n_cal > 0 && !cfg.ablate.disable_procrustes &&
               n_cal * model.tokens_per_segment() >= cfg.vae.latent_dim;
  if (align) {
    // too little data per subject to calibrate; train in the raw frames
    std::map<std::uint32_t, std::size_t> counts;
    for (const EEGRecording* s : data) ++counts[s->subject_id];
    align = std::ranges::any_of(counts, [&](const auto& c) { return c.second >= n_cal; });
  }
  SubjectMaps maps;
  auto refresh = [&] { maps = calibrate_subjects(model, data, calibration_reference(model, data)); };
  auto latents = [&](Tape& tape, std::span<const EEGRecording* const> segs) {
    Var z = batch_latents(model, tape, segs);
    return align ? aligned_latents(model, z, segs, maps) : z;
  };
  auto step = [&](Tape& tape, std::span<const EEGRecording* const> batch) {
    const std::size_t b = batch.size();
    Var rep = model.representation(tape, model.tokens(tape, latents(tape, batch), b), b);
    Var pooled = model.pool(tape, rep, b);

    const auto aug = augment(batch, cfg.train, aug_rng);
    const SegmentRefs aug_refs = refs(aug);
    Var rep2 = model.representation(tape, model.tokens(tape, latents(tape, aug_refs), b), b);

    StepTerms t;
    t.ce = cross_entropy(tape, model.head(tape, pooled), batch);
    t.align = align_loss(pooled, model.pool(tape, rep2, b), cfg.loss.tau);
    t.loss = add(t.ce, scale(t.align, cfg.loss.beta));
    return t;
  };
  auto logs = run_stage(model, data, cfg.train.epochs_finetune, "finetune", model.params().all(),
                        step, on_epoch, align ? std::function<void()>(refresh) : nullptr);
  model.stage = Stage::finetuned;
  return logs;
}

void write_epoch_csv(const std::filesystem::path& path, std::span<const EpochLog> logs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,loss,recon,geo,align,dynamics,ce\n";
  out.precision(10);
  for (const auto& l : logs)
    out << l.epoch << ',' << l.loss << ',' << l.recon << ',' << l.geo << ',' << l.align << ','
        << l.dynamics << ',' << l.ce << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

// ---- inference -----------------------------------------------------------------

namespace {

template <class Fn>
void for_each_chunk(const Model& model, std::span<const EEGRecording* const> segs, Fn fn) {
  const std::size_t bs = model.config().train.batch_size;
  for (std::size_t start = 0; start < segs.size(); start += bs)
    fn(start, segs.subspan(start, std::min(bs, segs.size() - start)));
}

}  // namespace

Tensor encode_latents(const Model& model, std::span<const EEGRecording* const> segs) {
  const std::size_t p = model.tokens_per_segment(), d = model.config().vae.latent_dim;
  Tensor out = Tensor::zeros(segs.size() * p, d);
  for_each_chunk(model, segs, [&](std::size_t start, std::span<const EEGRecording* const> chunk) {
    Tape tape;
    const Tensor z = time_to_segment_major(batch_latents(model, tape, chunk).value(), chunk.size());
    std::copy(z.values().begin(), z.values().end(), out.row(start * p).begin());
  });
  return out;
}

std::vector<Tensor> reconstruct(const Model& model, std::span<const EEGRecording* const> segs) {
  std::vector<Tensor> out;
  for_each_chunk(model, segs, [&](std::size_t, std::span<const EEGRecording* const> chunk) {
    Tape tape;
    Var xh = model.vae.decode(tape, batch_latents(model, tape, chunk));
    for (std::size_t b = 0; b < chunk.size(); ++b)
      out.push_back(unpatchify(xh.value(), chunk.size(), b, model.vae.n_channels()));
  });
  return out;
}

std::vector<std::size_t> predict(const Model& model, std::span<const EEGRecording* const> segs,
                                 const AlignmentMap* map) {
  std::vector<std::size_t> out;
  for_each_chunk(model, segs, [&](std::size_t, std::span<const EEGRecording* const> chunk) {
    Tape tape;
    const std::size_t b = chunk.size();
    Var z = batch_latents(model, tape, chunk);
    if (map != nullptr) z = tape.constant(apply_alignment(*map, z.value(), model.manifold()));
    Var logits = model.head(tape, model.pool(tape, model.representation(tape, model.tokens(tape, z, b), b), b));
    const Tensor& l = logits.value();
    for (std::size_t r = 0; r < l.rows(); ++r) {
      auto row = l.row(r);
      out.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  });
  return out;
}

std::size_t infer_class_count(std::span<const EEGRecording* const> segs) {
  std::size_t n = 0;
  for (const EEGRecording* s : segs) {
    if (!s->label) throw UsageError("data contains unlabelled segments");
    n = std::max<std::size_t>(n, *s->label + 1);
  }
  if (n < 2) throw UsageError("need at least two classes");
  return n;
}

TrainConfig with_shape(TrainConfig cfg, std::span<const EEGRecording* const> segs,
                       std::size_t n_classes) {
  if (segs.empty()) throw UsageError("no segments");
  const auto& f = *segs.front();
  for (const EEGRecording* s : segs)
    if (s->n_channels != f.n_channels || s->n_samples != f.n_samples || s->rate_hz != f.rate_hz)
      throw UsageError("segments are not dimensionally homogeneous");
  cfg.shape.n_channels = f.n_channels;
  cfg.shape.n_samples = f.n_samples;
  cfg.shape.rate_hz = f.rate_hz;
  cfg.shape.n_classes = n_classes;
  return cfg;
}

// ---- evaluation ----------------------------------------------------------------

namespace {

std::map<std::uint32_t, SegmentRefs> by_subject(std::span<const EEGRecording* const> segs) {
  std::map<std::uint32_t, SegmentRefs> out;
  for (const EEGRecording* s : segs) out[s->subject_id].push_back(s);
  return out;
}

constexpr int kReferenceIterations = 5;

}  // namespace

Tensor calibration_reference(const Model& model, std::span<const EEGRecording* const> segs) {
  const std::size_t n_cal = model.config().eval.calibration_segments;
  const std::size_t rows = n_cal * model.tokens_per_segment(), d = model.config().vae.latent_dim;
  std::vector<Tensor> clouds;
  for (const auto& [id, own] : by_subject(segs))
    if (own.size() >= n_cal) clouds.push_back(encode_latents(model, std::span(own).first(n_cal)));
  if (clouds.empty()) throw UsageError("no training subject has enough calibration segments");
  // Subjects sit in frames of their own, so the clouds are rotated onto a
  // common one before averaging.
  Tensor reference = clouds.front();
  for (int iter = 0; iter < kReferenceIterations; ++iter) {
    Tensor next = Tensor::zeros(rows, d);
    for (const Tensor& c : clouds) {
      const Tensor moved = apply_alignment(kabsch_align(c, reference), c, nullptr);
      for (std::size_t i = 0; i < moved.size(); ++i) next[i] += moved[i];
    }
    for (auto& v : next.values()) v /= static_cast<double>(clouds.size());
    if (const ManifoldKind* k = model.manifold())
      for (std::size_t r = 0; r < next.rows(); ++r) {
        const auto q = project(*k, next.row(r));
        std::copy(q.coords().begin(), q.coords().end(), next.row(r).begin());
      }
    reference = std::move(next);
  }
  return reference;
}

SubjectMaps calibrate_subjects(const Model& model, std::span<const EEGRecording* const> segs,
                               const Tensor& reference) {
  const std::size_t n_cal = model.config().eval.calibration_segments;
  SubjectMaps maps;
  for (const auto& [id, own] : by_subject(segs))
    if (own.size() >= n_cal)
      maps.emplace(id, kabsch_align(encode_latents(model, std::span(own).first(n_cal)), reference));
  return maps;
}

FoldResult evaluate_held_out(const Model& model, std::span<const EEGRecording* const> train,
                             std::span<const EEGRecording* const> test) {
  const auto& cfg = model.config();
  const std::size_t n_cal = cfg.eval.calibration_segments;
  const std::size_t p = model.tokens_per_segment(), d = cfg.vae.latent_dim;
  const bool align = n_cal > 0 && !cfg.ablate.disable_procrustes;
  if (n_cal > 0 && n_cal * p < d)
    throw UsageError("eval.calibration_segments gives " + std::to_string(n_cal * p) +
                     " anchors, fewer than latent_dim " + std::to_string(d));

  const Tensor reference = align ? calibration_reference(model, train) : Tensor{};

  FoldResult res;
  std::vector<std::size_t> truth, pred;
  for (const auto& [id, segs] : by_subject(test)) {
    res.test_subjects.push_back(id);
    if (segs.size() <= n_cal)
      throw UsageError("subject " + std::to_string(id) + " has no segments beyond calibration");
    std::optional<AlignmentMap> map;
    if (align) map = kabsch_align(encode_latents(model, std::span(segs).first(n_cal)), reference);
    const auto scored = std::span(segs).subspan(n_cal);
    const auto yhat = predict(model, scored, map ? &*map : nullptr);
    for (std::size_t i = 0; i < scored.size(); ++i) {
      if (!scored[i]->label) throw UsageError("evaluation needs labelled data");
      truth.push_back(*scored[i]->label);
      pred.push_back(yhat[i]);
    }
  }
  const auto cm = confusion(truth, pred, cfg.shape.n_classes);
  res.n_test = truth.size();
  res.accuracy = cm.accuracy();
  res.kappa = cm.kappa();
  return res;
}

CrossValidation cross_validate(const TrainConfig& cfg, const SegmentSet& data,
                               const CrossValidationOptions& opts) {
  SegmentSet set = data;
  set.validate();
  assign_subject_folds(set, cfg.eval.folds, cfg.seed);
  const SegmentRefs all = refs(set.segments);
  const std::size_t n_classes = infer_class_count(all);

  CrossValidation cv;
  const std::size_t n_folds =
      opts.max_folds == 0 ? cfg.eval.folds : std::min(opts.max_folds, cfg.eval.folds);
  for (std::size_t f = 0; f < n_folds; ++f) {
    SegmentRefs train, test;
    for (std::size_t i = 0; i < set.segments.size(); ++i)
      (set.folds[i] == static_cast<int>(f) ? test : train).push_back(&set.segments[i]);

    TrainConfig fold_cfg = with_shape(cfg, train, n_classes);
    fold_cfg.seed = Rng::stream(cfg.seed, "fold" + std::to_string(f))();
    Model model(fold_cfg);
    auto cb = [&](Stage s) -> EpochCallback {
      if (!opts.on_epoch) return {};
      return [&, s](const EpochLog& l) { opts.on_epoch(f, s, l); };
    };
    pretrain(model, train, cb(Stage::pretrained));
    train_transformer(model, train, cb(Stage::transformer));
    finetune(model, train, cb(Stage::finetuned));

    FoldResult r = evaluate_held_out(model, train, test);
    r.fold = f;
    cv.folds.push_back(r);
  }
  std::vector<double> acc, kap;
  for (const auto& r : cv.folds) {
    acc.push_back(r.accuracy);
    kap.push_back(r.kappa);
  }
  cv.accuracy = summarize(acc);
  cv.kappa = summarize(kap);
  return cv;
}

}  // namespace gm
