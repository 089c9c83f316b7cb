#include "evdet/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace evdet {

double max_sim(const EmbeddingBag& event, const EmbeddingBag& sentence) {
  MatrixXd sims = sentence.rows * event.rows.transpose();  // ms x me
  double total = 0.0;
  for (Eigen::Index r = 0; r < sims.rows(); ++r) total += sims.row(r).maxCoeff();
  return total;
}

namespace {

// MaxSim with the per-sentence-row argmax kept for the backward pass.
double max_sim_argmax(const MatrixXd& event_rows, const MatrixXd& sentence_rows,
                      std::vector<Eigen::Index>& argmax) {
  MatrixXd sims = sentence_rows * event_rows.transpose();
  argmax.resize(sims.rows());
  double total = 0.0;
  for (Eigen::Index r = 0; r < sims.rows(); ++r) {
    Eigen::Index best = 0;
    sims.row(r).maxCoeff(&best);
    argmax[r] = best;
    total += sims(r, best);
  }
  return total;
}

}  // namespace

RankerModel::RankerModel(Encoder encoder, ConvSpec spec)
    : encoder_(std::move(encoder)), spec_(spec) {
  if (spec_.width < 1 || spec_.stride < 1 || spec_.max_rows < 1)
    throw ArgumentError("conv width, stride and max_rows must be >= 1");
  int h = encoder_.dim();
  conv_filter_ = Tensor(static_cast<Eigen::Index>(spec_.width) * h, h);
  conv_filter_.value.topRows(h).setIdentity();  // starts as a strided row sampler
  conv_bias_ = Tensor(h, 1);
}

std::vector<std::string> RankerModel::marked_tokens(TextKind kind,
                                                    const std::vector<std::string>& text) {
  std::vector<std::string> out;
  out.reserve(text.size() + 1);
  out.push_back(kind == TextKind::sentence ? kSentMarker : kEventMarker);
  out.insert(out.end(), text.begin(), text.end());
  return out;
}

std::vector<std::string> RankerModel::event_text(const EventType& type) {
  std::vector<std::string> out{type.name};
  for (const auto& t : split_whitespace(type.definition)) out.push_back(t);
  return out;
}

RankerModel::ConvTrace RankerModel::embed_traced(const std::vector<std::string>& tokens) const {
  ConvTrace t;
  t.enc = encoder_.encode_traced(tokens);
  const int h = encoder_.dim();
  int rows = static_cast<int>(t.enc.rows.rows());
  t.padded_rows = std::max(rows, spec_.width);
  MatrixXd padded = MatrixXd::Zero(t.padded_rows, h);
  padded.topRows(rows) = t.enc.rows;

  int m = (t.padded_rows - spec_.width) / spec_.stride + 1;
  m = std::min(m, spec_.max_rows);
  t.pre_norm.resize(m, h);
  t.bag.resize(m, h);
  for (int r = 0; r < m; ++r) {
    VectorXd z = conv_bias_.value.col(0);
    for (int k = 0; k < spec_.width; ++k)
      z.noalias() +=
          conv_filter_.value.block(static_cast<Eigen::Index>(k) * h, 0, h, h).transpose() *
          padded.row(r * spec_.stride + k).transpose();
    t.pre_norm.row(r) = z.transpose();
    double norm = z.norm();
    if (norm < 1e-12)
      t.bag.row(r) = z.transpose();
    else
      t.bag.row(r) = (z / norm).transpose();
  }
  return t;
}

EmbeddingBag RankerModel::embed(TextKind kind, const std::vector<std::string>& text) const {
  return EmbeddingBag{embed_traced(marked_tokens(kind, text)).bag};
}

EmbeddingBag RankerModel::embed_type(const EventType& type) const {
  return embed(TextKind::event, event_text(type));
}

void RankerModel::conv_backward(const ConvTrace& trace, const MatrixXd& bag_grads) {
  const int h = encoder_.dim();
  const int m = static_cast<int>(trace.bag.rows());
  int enc_rows = static_cast<int>(trace.enc.rows.rows());
  MatrixXd padded = MatrixXd::Zero(trace.padded_rows, h);
  padded.topRows(enc_rows) = trace.enc.rows;
  MatrixXd padded_grads = MatrixXd::Zero(trace.padded_rows, h);

  for (int r = 0; r < m; ++r) {
    VectorXd g = bag_grads.row(r).transpose();
    VectorXd z = trace.pre_norm.row(r).transpose();
    double norm = z.norm();
    VectorXd gz;
    if (norm < 1e-12) {
      gz = g;  // normalization was skipped at this row
    } else {
      VectorXd y = z / norm;
      gz = (g - y.dot(g) * y) / norm;
    }
    conv_bias_.grad.col(0) += gz;
    for (int k = 0; k < spec_.width; ++k) {
      int row = r * spec_.stride + k;
      conv_filter_.grad.block(static_cast<Eigen::Index>(k) * h, 0, h, h).noalias() +=
          padded.row(row).transpose() * gz.transpose();
      padded_grads.row(row).noalias() +=
          (conv_filter_.value.block(static_cast<Eigen::Index>(k) * h, 0, h, h) * gz).transpose();
    }
  }
  encoder_.backward(trace.enc, padded_grads.topRows(enc_rows));
}

MarginStats RankerModel::margin_loss(const std::vector<RankerExample>& batch,
                                     const std::vector<std::vector<std::string>>& negatives,
                                     const Ontology& ont, double margin, bool accumulate_grads) {
  if (negatives.size() != batch.size())
    throw ArgumentError("one negative list per example required");

  // Every distinct type in the batch is embedded once; its gradient is
  // accumulated across examples and pushed back at the end.
  std::map<std::string, ConvTrace> type_traces;
  std::map<std::string, MatrixXd> type_grads;
  auto type_trace = [&](const std::string& id) -> const ConvTrace& {
    auto it = type_traces.find(id);
    if (it == type_traces.end()) {
      ConvTrace t = embed_traced(marked_tokens(TextKind::event, event_text(ont.type(id))));
      it = type_traces.emplace(id, std::move(t)).first;
      type_grads.emplace(id, MatrixXd::Zero(it->second.bag.rows(), it->second.bag.cols()));
    }
    return it->second;
  };

  MarginStats stats;
  double loss_sum = 0.0;

  for (size_t ei = 0; ei < batch.size(); ++ei) {
    const RankerExample& ex = batch[ei];
    if (ex.candidate_type_ids.empty())
      throw ArgumentError("ranker example with empty candidate set");
    std::set<std::string> candidate_set(ex.candidate_type_ids.begin(),
                                        ex.candidate_type_ids.end());

    ConvTrace sent = embed_traced(marked_tokens(TextKind::sentence, ex.tokens));
    MatrixXd sent_grads = MatrixXd::Zero(sent.bag.rows(), sent.bag.cols());

    double best_score = 0.0;
    std::string best_id;
    std::vector<Eigen::Index> best_argmax;
    for (const std::string& id : ex.candidate_type_ids) {
      const ConvTrace& t = type_trace(id);
      std::vector<Eigen::Index> am;
      double score = max_sim_argmax(t.bag, sent.bag, am);
      if (best_id.empty() || score > best_score) {
        best_score = score;
        best_id = id;
        best_argmax = std::move(am);
      }
    }

    int active_here = 0;
    for (const std::string& neg_id : negatives[ei]) {
      if (candidate_set.count(neg_id)) {
        ++stats.skipped;
        continue;
      }
      const ConvTrace& t = type_trace(neg_id);
      std::vector<Eigen::Index> am;
      double neg_score = max_sim_argmax(t.bag, sent.bag, am);
      ++stats.pairs;
      double term = margin - best_score + neg_score;
      if (term <= 0.0) continue;
      loss_sum += term;
      ++stats.active;
      ++active_here;
      if (!accumulate_grads) continue;
      // d(term)/d(neg bag rows) and the sentence side of the negative score
      MatrixXd& ng = type_grads[neg_id];
      for (Eigen::Index r = 0; r < sent.bag.rows(); ++r) {
        ng.row(am[r]) += sent.bag.row(r);
        sent_grads.row(r) += t.bag.row(am[r]);
      }
    }

    if (accumulate_grads && active_here > 0) {
      // The positive score enters every active pair with weight -1.
      const ConvTrace& bt = type_traces.at(best_id);
      MatrixXd& bg = type_grads[best_id];
      double w = static_cast<double>(active_here);
      for (Eigen::Index r = 0; r < sent.bag.rows(); ++r) {
        bg.row(best_argmax[r]) -= w * sent.bag.row(r);
        sent_grads.row(r) -= w * bt.bag.row(best_argmax[r]);
      }
    }

    if (accumulate_grads) conv_backward(sent, sent_grads);
  }

  if (accumulate_grads) {
    for (auto& [id, g] : type_grads)
      if (!g.isZero(0)) conv_backward(type_traces.at(id), g);
  }

  if (stats.pairs > 0) {
    stats.loss = loss_sum / static_cast<double>(stats.pairs);
    if (accumulate_grads) {
      double inv = 1.0 / static_cast<double>(stats.pairs);
      for (Tensor* t : trainable_tensors()) t->grad *= inv;
    }
  }
  return stats;
}

std::vector<Tensor*> RankerModel::trainable_tensors() {
  std::vector<Tensor*> out = {&conv_filter_, &conv_bias_};
  for (Tensor* t : encoder_.trainable_tensors()) out.push_back(t);
  return out;
}

void RankerModel::serialize(BinaryWriter& w) const {
  w.put_string("EVRK");
  w.put_u32(1);
  w.put_u32(static_cast<uint32_t>(spec_.width));
  w.put_u32(static_cast<uint32_t>(spec_.stride));
  w.put_u32(static_cast<uint32_t>(spec_.max_rows));
  w.put_matrix(conv_filter_.value);
  w.put_matrix(conv_bias_.value);
  encoder_.serialize(w);
}

RankerModel RankerModel::deserialize(BinaryReader& r) {
  if (r.get_string() != "EVRK") throw ParseError("not a ranker model blob");
  if (r.get_u32() != 1) throw ParseError("unsupported ranker model version");
  ConvSpec spec;
  spec.width = static_cast<int>(r.get_u32());
  spec.stride = static_cast<int>(r.get_u32());
  spec.max_rows = static_cast<int>(r.get_u32());
  MatrixXd filter = r.get_matrix();
  MatrixXd bias = r.get_matrix();
  Encoder enc = Encoder::deserialize(r);
  RankerModel m(std::move(enc), spec);
  m.conv_filter_.value = filter;
  m.conv_bias_.value = bias;
  return m;
}

NegativeSampler uniform_negative_sampler(const Ontology& ont) {
  std::vector<std::string> ids;
  for (const auto& [id, type] : ont.types()) ids.push_back(id);
  if (ids.empty()) throw ArgumentError("cannot sample negatives from an empty ontology");
  return [ids](const RankerExample&, int count, DetRng& rng) {
    std::vector<std::string> out;
    for (int i = 0; i < count; ++i) out.push_back(ids[rng.next_below(ids.size())]);
    return out;
  };
}

std::vector<double> train_ranker(RankerModel& model, const std::vector<RankerExample>& examples,
                                 const Ontology& ont, const RankerTrainConfig& cfg,
                                 const NegativeSampler& sampler, Warnings* warnings,
                                 MarginStats* last_epoch) {
  if (examples.empty()) throw ArgumentError("no ranker training examples");
  if (cfg.batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  NegativeSampler draw = sampler ? sampler : uniform_negative_sampler(ont);

  size_t n = examples.size();
  size_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  OptimConfig opt = cfg.optim;
  if (opt.total_steps == 0) opt.total_steps = static_cast<int>(batches_per_epoch) * cfg.epochs;
  AdamW optimizer(model.trainable_tensors(), opt);

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  std::vector<double> curve;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    DetRng shuffle_rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1)));
    shuffle_rng.shuffle(order);
    DetRng neg_rng(cfg.seed ^ (0xbf58476d1ce4e5b9ULL * (epoch + 1)));

    MarginStats epoch_stats;
    double epoch_loss = 0.0;
    long epoch_pairs = 0;
    for (size_t off = 0; off < n; off += cfg.batch_size) {
      std::vector<RankerExample> batch;
      std::vector<std::vector<std::string>> negatives;
      for (size_t k = off; k < std::min(n, off + static_cast<size_t>(cfg.batch_size)); ++k) {
        batch.push_back(examples[order[k]]);
        negatives.push_back(draw(batch.back(), cfg.negatives_per_sentence, neg_rng));
      }
      optimizer.zero_grad();
      MarginStats s = model.margin_loss(batch, negatives, ont, cfg.margin, true);
      optimizer.step();
      epoch_loss += s.loss * static_cast<double>(s.pairs);
      epoch_pairs += s.pairs;
      epoch_stats.pairs += s.pairs;
      epoch_stats.skipped += s.skipped;
      epoch_stats.active += s.active;
    }
    curve.push_back(epoch_pairs == 0 ? 0.0 : epoch_loss / static_cast<double>(epoch_pairs));
    epoch_stats.loss = curve.back();
    if (last_epoch) *last_epoch = epoch_stats;
    if (epoch_pairs == 0)
      warn(warnings, "ranker epoch " + std::to_string(epoch) + " saw no usable negatives");
  }
  return curve;
}

TypeIndex build_type_index(const RankerModel& model, const Ontology& ont) {
  TypeIndex index;
  index.h = model.encoder().dim();
  index.parameter_hash = 0;
  BinaryWriter w;
  model.serialize(w);
  index.parameter_hash = fnv1a64(w.buffer());
  for (const auto& [id, type] : ont.types()) {
    index.type_ids.push_back(id);
    index.bags.push_back(model.embed_type(type));
  }
  return index;
}

void save_type_index(const std::filesystem::path& bin_path, const TypeIndex& index) {
  BinaryWriter w;
  w.put_string("EVIX");
  w.put_u32(1);
  w.put_u32(static_cast<uint32_t>(index.type_ids.size()));
  for (size_t i = 0; i < index.type_ids.size(); ++i) {
    w.put_string(index.type_ids[i]);
    w.put_matrix(index.bags[i].rows);
  }
  atomic_write_file(bin_path, w.buffer());

  json manifest;
  manifest["h"] = index.h;
  manifest["parameter_hash"] = to_hex(index.parameter_hash);
  manifest["type_ids"] = index.type_ids;
  std::vector<int> rows;
  for (const auto& b : index.bags) rows.push_back(static_cast<int>(b.rows.rows()));
  manifest["rows"] = rows;
  atomic_write_file(bin_path.string() + ".json", manifest.dump(2) + "\n");
}

TypeIndex load_type_index(const std::filesystem::path& bin_path) {
  std::string blob = read_file(bin_path);
  BinaryReader r(blob);
  if (r.get_string() != "EVIX") throw ParseError("not a type index blob");
  if (r.get_u32() != 1) throw ParseError("unsupported type index version");
  uint32_t count = r.get_u32();
  TypeIndex index;
  for (uint32_t i = 0; i < count; ++i) {
    index.type_ids.push_back(r.get_string());
    index.bags.push_back(EmbeddingBag{r.get_matrix()});
  }

  json manifest = json::parse(read_file(bin_path.string() + ".json"));
  index.h = manifest.at("h").get<int>();
  index.parameter_hash = std::stoull(manifest.at("parameter_hash").get<std::string>(), nullptr, 16);
  auto ids = manifest.at("type_ids").get<std::vector<std::string>>();
  auto rows = manifest.at("rows").get<std::vector<int>>();
  if (ids != index.type_ids || rows.size() != index.bags.size())
    throw ConsistencyError("type index manifest does not match blob: " + bin_path.string());
  for (size_t i = 0; i < rows.size(); ++i)
    if (rows[i] != static_cast<int>(index.bags[i].rows.rows()) ||
        index.bags[i].rows.cols() != index.h)
      throw ConsistencyError("type index manifest does not match blob: " + bin_path.string());
  return index;
}

void check_index_fresh(const TypeIndex& index, const RankerModel& model) {
  BinaryWriter w;
  model.serialize(w);
  if (fnv1a64(w.buffer()) != index.parameter_hash)
    throw ConsistencyError(
        "type index is stale: it was built from different ranker parameters; rebuild the index");
}

std::vector<RankedType> rank_types(const RankerModel& model, const TypeIndex& index,
                                   const std::vector<std::string>& sentence_tokens) {
  if (index.h != model.encoder().dim())
    throw ConsistencyError("type index dimensionality does not match the model");
  check_index_fresh(index, model);
  EmbeddingBag sent = model.embed(TextKind::sentence, sentence_tokens);
  std::vector<RankedType> out;
  out.reserve(index.type_ids.size());
  for (size_t i = 0; i < index.type_ids.size(); ++i)
    out.push_back({index.type_ids[i], max_sim(index.bags[i], sent)});
  std::sort(out.begin(), out.end(), [](const RankedType& a, const RankedType& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.type_id < b.type_id;
  });
  return out;
}

std::vector<RankedType> top_k(const std::vector<RankedType>& ranked, int k) {
  if (k < 0) throw ArgumentError("k must be >= 0");
  size_t take = std::min(ranked.size(), static_cast<size_t>(k));
  return std::vector<RankedType>(ranked.begin(), ranked.begin() + take);
}

void save_ranker_model(const std::filesystem::path& path, const RankerModel& model) {
  BinaryWriter w;
  model.serialize(w);
  atomic_write_file(path, w.buffer());
  atomic_write_file(path.string() + ".json", encoder_sidecar(model.encoder()).dump(2) + "\n");
}

RankerModel load_ranker_model(const std::filesystem::path& path) {
  std::string blob = read_file(path);
  BinaryReader r(blob);
  return RankerModel::deserialize(r);
}

}  // namespace evdet
