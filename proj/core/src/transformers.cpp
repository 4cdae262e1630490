#include <algorithm>
#include <cstring>

#include "bf/error.hpp"
#include "bf/stream.hpp"

namespace bf {
namespace {

using nlohmann::json;

[[noreturn]] void bad_params(std::string_view fn, const std::string& why) {
  throw ContractError("mapping '" + std::string(fn) + "': " + why);
}

void require_string_list(std::string_view fn, const json& params, const char* key, bool required) {
  if (!params.contains(key)) {
    if (required) bad_params(fn, std::string("missing '") + key + "'");
    return;
  }
  const auto& v = params.at(key);
  if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); })) {
    bad_params(fn, std::string("'") + key + "' must be a list of source names");
  }
}

void require_string(std::string_view fn, const json& params, const char* key) {
  if (!params.is_object() || !params.contains(key) || !params.at(key).is_string()) {
    bad_params(fn, std::string("missing string '") + key + "'");
  }
}

void require_object(std::string_view fn, const json& params) {
  if (!params.is_object()) bad_params(fn, "params must be an object");
}

// Sources named in params["sources"], or every source when absent.
std::vector<std::string> selected(const Item& item, const json& params) {
  if (params.contains("sources")) return params.at("sources").get<std::vector<std::string>>();
  return item.names();
}

template <typename Fn>
Field map_field(const Field& f, Fn&& fn) {
  if (const auto* t = std::get_if<Tensor>(&f)) return fn(*t);
  const auto& list = std::get<TensorList>(f);
  TensorList out;
  for (const auto& t : list.items) out.items.push_back(fn(t));
  out.dtype = out.items.empty() ? list.dtype : out.items.front().dtype();
  return out;
}

DType field_dtype(const Field& f) {
  if (const auto* t = std::get_if<Tensor>(&f)) return t->dtype();
  return std::get<TensorList>(f).dtype;
}

// ---- scale_by ----
void validate_scale_by(const json& p) {
  require_object("scale_by", p);
  if (!p.contains("factor") || !p.at("factor").is_number()) bad_params("scale_by", "missing numeric 'factor'");
  require_string_list("scale_by", p, "sources", false);
}
Item apply_scale_by(const Item& in, const json& p) {
  const double factor = p.at("factor").get<double>();
  const bool explicit_sources = p.contains("sources");
  Item out = in;
  for (const auto& name : selected(in, p)) {
    const Field& f = in.at(name);
    if (is_integer(field_dtype(f))) {
      if (explicit_sources) bad_params("scale_by", "source '" + name + "' is not floating point");
      continue;
    }
    out.set(name, map_field(f, [&](const Tensor& t) {
      Tensor r = t;
      for (std::size_t i = 0; i < r.size(); ++i) r.set_from_double(i, t.get_as_double(i) * factor);
      return r;
    }));
  }
  return out;
}

// ---- cast_to ----
void validate_cast_to(const json& p) {
  require_string("cast_to", p, "dtype");
  dtype_from_name(p.at("dtype").get<std::string>());
  require_string_list("cast_to", p, "sources", false);
}
Item apply_cast_to(const Item& in, const json& p) {
  const DType dtype = dtype_from_name(p.at("dtype").get<std::string>());
  Item out = in;
  for (const auto& name : selected(in, p)) {
    out.set(name, map_field(in.at(name), [&](const Tensor& t) { return t.cast(dtype); }));
  }
  return out;
}

// ---- select_sources ----
void validate_select_sources(const json& p) {
  require_object("select_sources", p);
  require_string_list("select_sources", p, "sources", true);
}
Item apply_select_sources(const Item& in, const json& p) {
  Item out;
  for (const auto& name : p.at("sources").get<std::vector<std::string>>()) {
    out.set(name, in.at(name));
  }
  return out;
}

// ---- rename ----
void validate_rename(const json& p) {
  require_string("rename", p, "from");
  require_string("rename", p, "to");
}
Item apply_rename(const Item& in, const json& p) {
  const auto from = p.at("from").get<std::string>();
  const auto to = p.at("to").get<std::string>();
  Item out;
  for (const auto& [name, f] : in) out.set(name == from ? to : name, f);
  if (!in.contains(from)) throw LookupError("rename: item has no source '" + from + "'");
  return out;
}

// ---- one_hot ----
void validate_one_hot(const json& p) {
  require_string("one_hot", p, "source");
  if (!p.contains("classes") || !p.at("classes").is_number_integer() ||
      p.at("classes").get<long long>() <= 0) {
    bad_params("one_hot", "'classes' must be a positive integer");
  }
  if (p.contains("flatten") && !p.at("flatten").is_boolean()) bad_params("one_hot", "'flatten' must be a boolean");
}
Item apply_one_hot(const Item& in, const json& p) {
  const auto name = p.at("source").get<std::string>();
  const auto classes = p.at("classes").get<std::size_t>();
  const bool flatten = p.value("flatten", false);
  const Tensor& t = in.tensor(name);
  if (!is_integer(t.dtype())) bad_params("one_hot", "source '" + name + "' is not integer typed");
  Shape shape = t.shape();
  shape.push_back(classes);
  Tensor r(DType::F64, shape);
  auto dst = r.values<double>();
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double v = t.get_as_double(i);
    if (v < 0 || v >= static_cast<double>(classes)) {
      bad_params("one_hot", "value " + std::to_string(static_cast<long long>(v)) + " outside [0, " +
                                std::to_string(classes) + ")");
    }
    dst[i * classes + static_cast<std::size_t>(v)] = 1.0;
  }
  if (flatten && r.ndim() > 2) {
    r = r.reshaped({shape[0], shape_product(std::span(shape).subspan(1))});
  }
  Item out = in;
  out.set(name, std::move(r));
  return out;
}

// ---- flatten ----
void validate_flatten(const json& p) {
  require_object("flatten", p);
  require_string_list("flatten", p, "sources", false);
}
Item apply_flatten(const Item& in, const json& p) {
  Item out = in;
  for (const auto& name : selected(in, p)) {
    const Tensor& t = in.tensor(name);
    if (t.ndim() <= 2) continue;
    out.set(name, t.reshaped({t.shape()[0], shape_product(std::span(t.shape()).subspan(1))}));
  }
  return out;
}

// ---- trim_to_length ----
void validate_trim(const json& p) {
  require_string("trim_to_length", p, "source");
  require_string("trim_to_length", p, "lengths");
  if (p.contains("keep_lengths") && !p.at("keep_lengths").is_boolean()) {
    bad_params("trim_to_length", "'keep_lengths' must be a boolean");
  }
}
Item apply_trim(const Item& in, const json& p) {
  const auto name = p.at("source").get<std::string>();
  const auto len_name = p.at("lengths").get<std::string>();
  const Tensor& seq = in.tensor(name);
  const Tensor& lengths = in.tensor(len_name);
  auto checked_len = [&](double v, std::size_t max) {
    if (v < 0 || v > static_cast<double>(max)) bad_params("trim_to_length", "length out of range");
    return static_cast<std::size_t>(v);
  };
  Item out = in;
  if (lengths.ndim() == 0) {
    if (seq.ndim() < 1) bad_params("trim_to_length", "source must have a time axis");
    out.set(name, seq.slice_rows(0, checked_len(lengths.get_as_double(0), seq.shape()[0])));
  } else {
    if (seq.ndim() < 2 || lengths.ndim() != 1 || lengths.shape()[0] != seq.shape()[0]) {
      bad_params("trim_to_length", "batch shapes of source and lengths disagree");
    }
    TensorList list{seq.dtype(), {}};
    for (std::size_t i = 0; i < seq.shape()[0]; ++i) {
      Tensor row = seq.row(i);
      list.items.push_back(row.slice_rows(0, checked_len(lengths.get_as_double(i), row.shape()[0])));
    }
    out.set(name, std::move(list));
  }
  if (!p.value("keep_lengths", false)) out.erase(len_name);
  return out;
}

const std::vector<MappingFunction>& registry() {
  static const std::vector<MappingFunction> fns = {
      {"scale_by", validate_scale_by, apply_scale_by},
      {"cast_to", validate_cast_to, apply_cast_to},
      {"select_sources", validate_select_sources, apply_select_sources},
      {"rename", validate_rename, apply_rename},
      {"one_hot", validate_one_hot, apply_one_hot},
      {"flatten", validate_flatten, apply_flatten},
      {"trim_to_length", validate_trim, apply_trim},
  };
  return fns;
}

std::string signal_name(std::optional<EventKind> k) {
  if (!k) return "none";
  return *k == EventKind::EpochEnd ? "epoch_end" : "exhausted";
}

std::optional<EventKind> signal_from_name(const std::string& s) {
  if (s == "none") return std::nullopt;
  if (s == "epoch_end") return EventKind::EpochEnd;
  if (s == "exhausted") return EventKind::Exhausted;
  throw FormatError("batch state: unknown pending signal '" + s + "'");
}

}  // namespace

const MappingFunction& find_mapping(std::string_view name) {
  for (const auto& f : registry()) {
    if (f.name == name) return f;
  }
  throw LookupError("unknown mapping function '" + std::string(name) + "'");
}

std::vector<std::string> mapping_names() {
  std::vector<std::string> out;
  for (const auto& f : registry()) out.push_back(f.name);
  return out;
}

// ---- Mapping ----

Mapping::Mapping(std::unique_ptr<Stream> upstream, std::string function_id, json params)
    : Transformer(std::move(upstream)), fn_(&find_mapping(function_id)), params_(std::move(params)) {
  if (params_.is_null()) params_ = json::object();
  fn_->validate(params_);
}

StreamEvent Mapping::next() {
  StreamEvent ev = pull();
  if (ev.is_item()) ev.item = fn_->apply(ev.item, params_);
  return ev;
}

json Mapping::own_state() const { return {{"function", fn_->name}, {"params", params_}}; }

void Mapping::restore_own_state(const json& state) {
  if (state.at("function").get<std::string>() != fn_->name || state.at("params") != params_) {
    throw FormatError("mapping state: function or params differ from the pipeline");
  }
}

// ---- Batch ----

Batch::Batch(std::unique_ptr<Stream> upstream, std::size_t size, LastBatch policy,
             std::vector<std::string> ragged_sources)
    : Transformer(std::move(upstream)), size_(size), policy_(policy), ragged_(std::move(ragged_sources)) {
  if (size_ == 0) throw ContractError("batch: size must be positive");
}

Item Batch::assemble(std::vector<Item>& rows) const {
  const auto names = rows.front().names();
  Item out;
  for (const auto& name : names) {
    std::vector<Tensor> parts;
    parts.reserve(rows.size());
    for (auto& r : rows) {
      if (r.names() != names) throw ContractError("batch: examples have different sources");
      const Field& f = r.at(name);
      if (!std::holds_alternative<Tensor>(f)) {
        throw ContractError("batch: source '" + name + "' is already batched");
      }
      parts.push_back(std::get<Tensor>(f));
    }
    const bool ragged = std::find(ragged_.begin(), ragged_.end(), name) != ragged_.end();
    if (ragged) {
      for (const auto& p : parts) {
        if (p.dtype() != parts.front().dtype()) throw ContractError("batch: mixed dtypes in '" + name + "'");
      }
      out.set(name, TensorList{parts.front().dtype(), std::move(parts)});
    } else {
      try {
        out.set(name, Tensor::stack(parts));
      } catch (const ContractError& e) {
        throw ContractError("batch: inconsistent shapes in source '" + name + "': " + e.what());
      }
    }
  }
  return out;
}

StreamEvent Batch::next() {
  if (pending_) {
    const EventKind k = *pending_;
    if (k == EventKind::EpochEnd) pending_.reset();
    return k == EventKind::EpochEnd ? StreamEvent::epoch_end() : StreamEvent::exhausted();
  }
  std::vector<Item> rows;
  for (;;) {
    StreamEvent ev = pull();
    if (ev.is_item()) {
      rows.push_back(std::move(ev.item));
      if (rows.size() == size_) return StreamEvent::of(assemble(rows));
      continue;
    }
    if (rows.empty() || policy_ == LastBatch::Drop) {
      if (ev.kind == EventKind::Exhausted) pending_ = EventKind::Exhausted;
      return ev;
    }
    pending_ = ev.kind;
    return StreamEvent::of(assemble(rows));
  }
}

json Batch::own_state() const {
  return {{"size", size_},
          {"policy", last_batch_name(policy_)},
          {"ragged_sources", ragged_},
          {"pending", signal_name(pending_)}};
}

void Batch::restore_own_state(const json& state) {
  if (state.at("size").get<std::size_t>() != size_ ||
      state.at("policy").get<std::string>() != last_batch_name(policy_) ||
      state.at("ragged_sources").get<std::vector<std::string>>() != ragged_) {
    throw FormatError("batch state: configuration differs from the pipeline");
  }
  pending_ = signal_from_name(state.at("pending").get<std::string>());
}

// ---- Padding ----

Padding::Padding(std::unique_ptr<Stream> upstream, double pad_value,
                 std::vector<std::string> exempt_sources)
    : Transformer(std::move(upstream)), pad_value_(pad_value), exempt_(std::move(exempt_sources)) {}

StreamEvent Padding::next() {
  StreamEvent ev = pull();
  if (!ev.is_item()) return ev;
  Item out;
  for (const auto& [name, field] : ev.item) {
    if (std::find(exempt_.begin(), exempt_.end(), name) != exempt_.end()) {
      out.set(name, field);
      continue;
    }
    std::vector<Tensor> seqs;
    DType dtype;
    if (const auto* t = std::get_if<Tensor>(&field)) {
      if (t->ndim() < 2) {
        throw ContractError("padding: source '" + name +
                            "' is not a batch of sequences; list it as exempt");
      }
      for (std::size_t i = 0; i < t->shape()[0]; ++i) seqs.push_back(t->row(i));
      dtype = t->dtype();
    } else {
      const auto& list = std::get<TensorList>(field);
      seqs = list.items;
      dtype = list.dtype;
    }
    std::size_t max_len = 0;
    Shape trailing;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      const Tensor& s = seqs[i];
      if (s.ndim() < 1) {
        throw ContractError("padding: source '" + name + "' has scalar rows; list it as exempt");
      }
      Shape tail(s.shape().begin() + 1, s.shape().end());
      if (i == 0) trailing = tail;
      if (tail != trailing || s.dtype() != dtype) {
        throw ContractError("padding: sequences of '" + name + "' differ beyond the time axis");
      }
      max_len = std::max(max_len, s.shape()[0]);
    }
    const std::size_t b = seqs.size();
    Shape shape{b, max_len};
    shape.insert(shape.end(), trailing.begin(), trailing.end());
    Tensor padded(dtype, shape);
    const std::size_t step = shape_product(trailing);
    for (std::size_t i = 0; i < padded.size(); ++i) padded.set_from_double(i, pad_value_);
    Tensor mask(DType::F64, {b, max_len});
    auto mv = mask.values<double>();
    const std::size_t esz = dtype_size(dtype);
    for (std::size_t i = 0; i < b; ++i) {
      const Tensor& s = seqs[i];
      const std::size_t len = s.shape()[0];
      if (s.nbytes() != 0) {
        std::memcpy(padded.bytes().data() + i * max_len * step * esz, s.bytes().data(), s.nbytes());
      }
      for (std::size_t t = 0; t < len; ++t) mv[i * max_len + t] = 1.0;
    }
    out.set(name, std::move(padded));
    out.set(name + "_mask", std::move(mask));
  }
  return StreamEvent::of(std::move(out));
}

json Padding::own_state() const { return {{"pad_value", pad_value_}, {"exempt", exempt_}}; }

void Padding::restore_own_state(const json& state) {
  if (state.at("pad_value").get<double>() != pad_value_ ||
      state.at("exempt").get<std::vector<std::string>>() != exempt_) {
    throw FormatError("padding state: configuration differs from the pipeline");
  }
}

// ---- NGrams ----

NGrams::NGrams(std::unique_ptr<Stream> upstream, std::size_t n, std::string source,
               std::string context_name, std::string target_name)
    : Transformer(std::move(upstream)),
      n_(n),
      source_(std::move(source)),
      context_name_(std::move(context_name)),
      target_name_(std::move(target_name)) {
  if (n_ == 0) throw ContractError("ngrams: n must be positive");
}

StreamEvent NGrams::next() {
  for (;;) {
    if (sequence_ && position_ + n_ < sequence_->shape()[0]) {
      Item out;
      out.set(context_name_, sequence_->slice_rows(position_, position_ + n_));
      out.set(target_name_, sequence_->row(position_ + n_));
      ++position_;
      return StreamEvent::of(std::move(out));
    }
    sequence_.reset();
    position_ = 0;
    StreamEvent ev = pull();
    if (!ev.is_item()) return ev;
    const Tensor& seq = ev.item.tensor(source_);
    if (seq.ndim() != 1 || !is_integer(seq.dtype())) {
      throw ContractError("ngrams: source '" + source_ + "' must hold 1-D integer sequences, got " +
                          std::string(dtype_name(seq.dtype())) + " " + shape_to_string(seq.shape()));
    }
    sequence_ = seq;
  }
}

json NGrams::own_state() const {
  return {{"n", n_},
          {"source", source_},
          {"sequence", sequence_ ? sequence_->to_json() : json(nullptr)},
          {"position", position_}};
}

void NGrams::restore_own_state(const json& state) {
  if (state.at("n").get<std::size_t>() != n_ || state.at("source").get<std::string>() != source_) {
    throw FormatError("ngrams state: configuration differs from the pipeline");
  }
  const auto& seq = state.at("sequence");
  sequence_ = seq.is_null() ? std::nullopt : std::optional<Tensor>(Tensor::from_json(seq));
  position_ = state.at("position").get<std::size_t>();
}

// ---- RandomCrop ----

RandomCrop::RandomCrop(std::unique_ptr<Stream> upstream, std::string source, std::size_t crop_height,
                       std::size_t crop_width, std::uint64_t seed, std::size_t image_ndim)
    : Transformer(std::move(upstream)),
      source_(std::move(source)),
      crop_h_(crop_height),
      crop_w_(crop_width),
      image_ndim_(image_ndim),
      rng_(seed) {
  if (image_ndim_ != 2 && image_ndim_ != 3) throw ContractError("random_crop: image_ndim must be 2 or 3");
  if (crop_h_ == 0 || crop_w_ == 0) throw ContractError("random_crop: crop size must be positive");
}

Tensor RandomCrop::crop_one(const Tensor& image) {
  const std::size_t h = image.shape()[0];
  const std::size_t w = image.shape()[1];
  if (crop_h_ > h || crop_w_ > w) {
    throw ContractError("random_crop: crop " + std::to_string(crop_h_) + "x" + std::to_string(crop_w_) +
                        " larger than image " + std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t top = rng_.bounded(static_cast<std::uint32_t>(h - crop_h_ + 1));
  const std::size_t left = rng_.bounded(static_cast<std::uint32_t>(w - crop_w_ + 1));
  const std::size_t channels = image_ndim_ == 3 ? image.shape()[2] : 1;
  Shape shape{crop_h_, crop_w_};
  if (image_ndim_ == 3) shape.push_back(channels);
  Tensor out(image.dtype(), shape);
  const std::size_t px = channels * dtype_size(image.dtype());
  for (std::size_t r = 0; r < crop_h_; ++r) {
    std::memcpy(out.bytes().data() + r * crop_w_ * px,
                image.bytes().data() + ((top + r) * w + left) * px, crop_w_ * px);
  }
  return out;
}

StreamEvent RandomCrop::next() {
  StreamEvent ev = pull();
  if (!ev.is_item()) return ev;
  const Tensor& t = ev.item.tensor(source_);
  if (t.ndim() == image_ndim_) {
    ev.item.set(source_, crop_one(t));
  } else if (t.ndim() == image_ndim_ + 1) {
    std::vector<Tensor> crops;
    for (std::size_t i = 0; i < t.shape()[0]; ++i) crops.push_back(crop_one(t.row(i)));
    if (crops.empty()) {
      Shape shape{0, crop_h_, crop_w_};
      if (image_ndim_ == 3) shape.push_back(t.shape()[3]);
      ev.item.set(source_, Tensor(t.dtype(), shape));
    } else {
      ev.item.set(source_, Tensor::stack(crops));
    }
  } else {
    throw ContractError("random_crop: source '" + source_ + "' has shape " + shape_to_string(t.shape()) +
                        ", expected " + std::to_string(image_ndim_) + " image axes");
  }
  return ev;
}

json RandomCrop::own_state() const {
  return {{"source", source_}, {"height", crop_h_}, {"width", crop_w_}, {"rng", rng_.to_json()}};
}

void RandomCrop::restore_own_state(const json& state) {
  if (state.at("source").get<std::string>() != source_ || state.at("height").get<std::size_t>() != crop_h_ ||
      state.at("width").get<std::size_t>() != crop_w_) {
    throw FormatError("random_crop state: configuration differs from the pipeline");
  }
  rng_ = Rng::from_json(state.at("rng"));
}

}  // namespace bf
