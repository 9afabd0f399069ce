// SPDX-License-Identifier: Apache-2.0
#include "geomanifold/commands.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "geomanifold/error.hpp"
#include "geomanifold/synthetic.hpp"

namespace gm {

namespace {

const std::filesystem::path& need(const std::optional<std::filesystem::path>& p, const char* flag,
                                  const std::string& cmd) {
  if (!p) throw UsageError(cmd + " requires " + flag);
  return *p;
}

std::filesystem::path with_suffix(const std::filesystem::path& p, const std::string& suffix) {
  return std::filesystem::path(p.string() + suffix);
}

std::vector<EEGRecording> read_segments(const CommandArgs& args) {
  auto recs = read_eegb(need(args.data, "--data", args.command));
  if (recs.empty()) throw UsageError(args.data->string() + " holds no recordings");
  return recs;
}

std::size_t class_count(const TrainConfig& cfg, const SegmentRefs& segs) {
  if (cfg.shape.n_classes > 0) return cfg.shape.n_classes;
  bool labelled = true;
  for (const auto* s : segs) labelled = labelled && s->label.has_value();
  if (!labelled) throw UsageError("unlabelled data: set shape.n_classes in the config");
  return infer_class_count(segs);
}

std::unique_ptr<Model> load_stage(const CommandArgs& args, Stage expected, const TrainConfig& cfg) {
  auto loaded = load_weights(need(args.weights, "--weights", args.command));
  if (loaded->stage != expected)
    throw UsageError(args.command + " needs " + to_string(expected) + " weights, " +
                     args.weights->string() + " is at stage '" + to_string(loaded->stage) + "'");
  TrainConfig merged = cfg;
  merged.shape = loaded->config().shape;
  auto model = rebuild(*loaded, merged);
  model->stage = loaded->stage;
  return model;
}

void check_data_shape(const Model& model, const SegmentRefs& segs) {
  const auto& sh = model.config().shape;
  for (const auto* s : segs)
    if (s->n_channels != sh.n_channels || s->n_samples != sh.n_samples)
      throw UsageError("data shape " + std::to_string(s->n_channels) + "x" +
                       std::to_string(s->n_samples) + " does not match the model's " +
                       std::to_string(sh.n_channels) + "x" + std::to_string(sh.n_samples));
}

void report_epochs(std::ostream& log, const char* stage, const EpochLog& l) {
  log << stage << " epoch " << l.epoch << " loss " << l.loss << '\n';
}

}  // namespace

TrainConfig resolve_config(const CommandArgs& args) {
  if (args.config.empty()) throw UsageError("--config is required");
  TrainConfig cfg = load_config(args.config);
  if (args.seed) cfg.seed = *args.seed;
  for (const auto& a : args.ablate) cfg.ablate.enable(a);
  cfg.finalize();
  return cfg;
}

std::unique_ptr<Model> rebuild(const Model& src, TrainConfig cfg) {
  auto model = std::make_unique<Model>(std::move(cfg));
  if (model->params().size() != src.params().size())
    throw UsageError("config describes a different architecture than the weights");
  for (const Parameter* p : src.params().all()) {
    Parameter* q = model->params().find(p->name);
    if (q == nullptr || q->value.dims() != p->value.dims())
      throw UsageError("config is incompatible with weights at tensor '" + p->name + "'");
    q->value = p->value;
  }
  model->stage = src.stage;
  return model;
}

SegmentSet preprocess(std::span<const EEGRecording> recs, const PrepConfig& prep) {
  SegmentSet out;
  for (const auto& r : recs) {
    EEGRecording x = resample(r, prep.rate_hz);
    x = bandpass(x, prep.filter);
    x = average_rereference(x);
    auto segs = segment(x, prep.window_s);
    for (auto& s : segs.segments) out.segments.push_back(std::move(s));
  }
  return out;
}

void cmd_gen(const CommandArgs& args, std::ostream& log) {
  const TrainConfig cfg = resolve_config(args);
  const SegmentSet set = synthesize(cfg.gen, cfg.seed);
  write_eegb(need(args.out, "--out", "gen"), set.segments);
  std::map<std::uint32_t, std::size_t> counts;
  for (const auto& s : set.segments) ++counts[*s.label];
  log << "wrote " << set.segments.size() << " segments to " << args.out->string() << '\n';
  for (const auto& [k, n] : counts) log << "class " << k << ": " << n << '\n';
}

void cmd_prep(const CommandArgs& args, std::ostream& log) {
  const TrainConfig cfg = resolve_config(args);
  const auto recs = read_segments(args);
  const SegmentSet set = preprocess(recs, cfg.prep);
  write_eegb(need(args.out, "--out", "prep"), set.segments);
  log << "wrote " << set.segments.size() << " segments of "
      << (set.segments.empty() ? 0 : set.segments.front().n_samples) << " samples at "
      << cfg.prep.rate_hz << " Hz\n";
}

void cmd_pretrain(const CommandArgs& args, std::ostream& log) {
  const TrainConfig cfg = resolve_config(args);
  const auto& out = need(args.out, "--out", "pretrain");
  const auto data = read_segments(args);
  const SegmentRefs segs = refs(data);
  Model model(with_shape(cfg, segs, class_count(cfg, segs)));
  const auto logs = pretrain(model, segs, [&](const EpochLog& l) { report_epochs(log, "pretrain", l); });
  save_weights(out, model);
  write_epoch_csv(with_suffix(out, ".csv"), logs);
}

void cmd_train(const CommandArgs& args, std::ostream& log) {
  const TrainConfig cfg = resolve_config(args);
  const auto& out = need(args.out, "--out", "train");
  auto model = load_stage(args, Stage::pretrained, cfg);
  const auto data = read_segments(args);
  const SegmentRefs segs = refs(data);
  check_data_shape(*model, segs);
  const auto logs =
      train_transformer(*model, segs, [&](const EpochLog& l) { report_epochs(log, "train", l); });
  save_weights(out, *model);
  write_epoch_csv(with_suffix(out, ".csv"), logs);
}

void cmd_finetune(const CommandArgs& args, std::ostream& log) {
  const TrainConfig cfg = resolve_config(args);
  const auto& out = need(args.out, "--out", "finetune");
  auto model = load_stage(args, Stage::transformer, cfg);
  const auto data = read_segments(args);
  const SegmentRefs segs = refs(data);
  check_data_shape(*model, segs);
  for (const auto* s : segs)
    if (!s->label) throw UsageError("finetune needs labelled data");
  const auto logs =
      finetune(*model, segs, [&](const EpochLog& l) { report_epochs(log, "finetune", l); });
  save_weights(out, *model);
  write_epoch_csv(with_suffix(out, ".csv"), logs);
}

CrossValidation cmd_eval(const CommandArgs& args, std::ostream& log) {
  const TrainConfig cfg = resolve_config(args);
  SegmentSet set;
  set.segments = read_segments(args);
  CrossValidationOptions opts;
  opts.on_epoch = [&log](std::size_t fold, Stage stage, const EpochLog& e) {
    log << "fold " << fold << ' ' << to_string(stage) << " epoch " << e.epoch << " loss " << e.loss
        << '\n' << std::flush;
  };
  const CrossValidation cv = cross_validate(cfg, set, opts);
  std::ostringstream csv;
  csv.precision(10);
  csv << "fold,subjects,n_test,accuracy,kappa\n";
  for (const auto& f : cv.folds) {
    std::string subj;
    for (auto s : f.test_subjects) subj += (subj.empty() ? "" : " ") + std::to_string(s);
    csv << f.fold << ',' << subj << ',' << f.n_test << ',' << f.accuracy << ',' << f.kappa << '\n';
    log << "fold " << f.fold << " subjects [" << subj << "] accuracy " << f.accuracy << " kappa "
        << f.kappa << '\n';
  }
  log << "accuracy " << cv.accuracy.mean << " +- " << cv.accuracy.std << ", kappa " << cv.kappa.mean
      << " +- " << cv.kappa.std << '\n';
  if (args.out) {
    std::ofstream f(*args.out);
    if (!(f << csv.str())) throw IoError("cannot write " + args.out->string());
  }
  return cv;
}

void cmd_embed(const CommandArgs& args, std::ostream& log) {
  const TrainConfig cfg = resolve_config(args);
  (void)cfg;
  const auto& out = need(args.out, "--out", "embed");
  auto model = load_weights(need(args.weights, "--weights", "embed"));
  const auto data = read_segments(args);
  const SegmentRefs segs = refs(data);
  check_data_shape(*model, segs);
  const Tensor z = encode_latents(*model, segs);
  write_embeddings(out, segs, z, model->tokens_per_segment());

  const auto recon = reconstruct(*model, segs);
  std::ofstream rf(with_suffix(out, ".recon.csv"));
  if (!rf) throw IoError("cannot write reconstructions");
  rf.precision(9);
  rf << "segment";
  for (std::size_t i = 0; i < recon.front().size(); ++i) rf << ",x" << i;
  rf << '\n';
  for (std::size_t s = 0; s < recon.size(); ++s) {
    rf << s;
    for (double v : recon[s].values()) rf << ',' << v;
    rf << '\n';
  }
  log << "wrote " << z.rows() << " latent rows and " << recon.size() << " reconstructions\n";
}

AlignReport cmd_align(const CommandArgs& args, std::ostream& log) {
  const TrainConfig cfg = resolve_config(args);
  const Tensor src = read_embeddings(need(args.data, "--data", "align"));
  const Tensor tgt = read_embeddings(need(args.target, "--target", "align"));
  if (src.rows() != tgt.rows() || src.cols() != tgt.cols())
    throw UsageError("align: source and target embeddings differ in shape");
  const std::size_t d = src.cols();
  ManifoldKind kind = cfg.vae.manifold;
  kind.dim = d;
  const Geometry g = cfg.vae.use_manifold ? kind.geometry() : Geometry::euclidean;

  AlignReport rep;
  rep.map = cfg.ablate.disable_procrustes ? AlignmentMap::identity(d) : kabsch_align(src, tgt);
  if (rep.map.degenerate) log << "warning: cross-covariance is rank deficient, rotation not unique\n";
  const Tensor moved = apply_alignment(rep.map, src, cfg.vae.use_manifold ? &kind : nullptr);
  for (std::size_t r = 0; r < src.rows(); ++r) {
    rep.mean_distance_before += kernels::distance(g, src.row(r).data(), tgt.row(r).data(), d);
    rep.mean_distance_after += kernels::distance(g, moved.row(r).data(), tgt.row(r).data(), d);
  }
  rep.mean_distance_before /= static_cast<double>(src.rows());
  rep.mean_distance_after /= static_cast<double>(src.rows());
  rep.reduction = rep.mean_distance_before > 0
                      ? 1.0 - rep.mean_distance_after / rep.mean_distance_before
                      : 0.0;
  rep.det = determinant(rep.map.rotation);
  log << "mean matched distance before " << rep.mean_distance_before << " after "
      << rep.mean_distance_after << " (reduction " << 100.0 * rep.reduction << "%)\n";
  log << "det(R) = " << rep.det << (std::abs(rep.det - 1.0) <= 1e-9 ? " ok" : " NOT PROPER") << '\n';
  if (args.out) write_alignment(*args.out, rep.map);
  return rep;
}

int run_command(const CommandArgs& args, std::ostream& log, std::ostream& err) {
  try {
    const std::string& c = args.command;
    if (c == "gen") cmd_gen(args, log);
    else if (c == "prep") cmd_prep(args, log);
    else if (c == "pretrain") cmd_pretrain(args, log);
    else if (c == "train") cmd_train(args, log);
    else if (c == "finetune") cmd_finetune(args, log);
    else if (c == "eval") cmd_eval(args, log);
    else if (c == "embed") cmd_embed(args, log);
    else if (c == "align") cmd_align(args, log);
    else throw UsageError("unknown command '" + c + "'");
    return 0;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return 3;
  }
}

// ---- text formats ----------------------------------------------------------------

void write_embeddings(const std::filesystem::path& path, std::span<const EEGRecording* const> segs,
                      const Tensor& latents, std::size_t tokens_per_segment) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "segment,subject,label,patch";
  for (std::size_t j = 0; j < latents.cols(); ++j) out << ",z" << j;
  out << '\n';
  for (std::size_t r = 0; r < latents.rows(); ++r) {
    const std::size_t s = r / tokens_per_segment;
    out << s << ',' << segs[s]->subject_id << ','
        << (segs[s]->label ? static_cast<long>(*segs[s]->label) : -1L) << ','
        << r % tokens_per_segment;
    for (double v : latents.row(r)) out << ',' << v;
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double to_double(const std::string& s, std::size_t line, std::size_t col) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw FormatError("line " + std::to_string(line) + ", column " + std::to_string(col) +
                        ": not a number '" + s + "'",
                    line);
}

}  // namespace

Tensor read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty embeddings file " + path.string(), 0);
  const auto header = split_csv(line);
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i].size() > 1 && header[i][0] == 'z') cols.push_back(i);
  if (cols.empty()) throw FormatError("no z columns in " + path.string(), 0);
  std::vector<double> values;
  std::size_t rows = 0;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw FormatError("line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                            " cells, header has " + std::to_string(header.size()),
                        lineno);
    for (auto c : cols) values.push_back(to_double(cells[c], lineno, c));
    ++rows;
  }
  if (rows == 0) throw FormatError("no rows in " + path.string(), 1);
  return Tensor::matrix(rows, cols.size(), std::move(values));
}

void write_alignment(const std::filesystem::path& path, const AlignmentMap& map) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  auto row = [&](const char* tag, std::span<const double> v) {
    out << tag;
    for (double x : v) out << ',' << x;
    out << '\n';
  };
  row("source_centroid", map.source_centroid);
  row("target_centroid", map.target_centroid);
  for (std::size_t i = 0; i < map.dim(); ++i) row("rotation", map.rotation.row(i));
  if (!out) throw IoError("write failed: " + path.string());
}

AlignmentMap read_alignment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  AlignmentMap m;
  std::vector<double> rot;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    auto cells = split_csv(line);
    std::vector<double> v;
    for (std::size_t i = 1; i < cells.size(); ++i) v.push_back(to_double(cells[i], lineno, i));
    if (cells[0] == "source_centroid") m.source_centroid = v;
    else if (cells[0] == "target_centroid") m.target_centroid = v;
    else if (cells[0] == "rotation") rot.insert(rot.end(), v.begin(), v.end());
    else throw FormatError("unknown row tag '" + cells[0] + "'", lineno);
  }
  const std::size_t d = m.source_centroid.size();
  if (d == 0 || m.target_centroid.size() != d || rot.size() != d * d)
    throw FormatError("alignment file " + path.string() + " is incomplete", 0);
  m.rotation = Tensor::matrix(d, d, std::move(rot));
  return m;
}

}  // namespace gm
