#include "disco/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "disco/errors.hpp"
#include "json.hpp"

namespace disco {

using nlohmann::json;

std::string to_string(Architecture arch) {
  switch (arch) {
    case Architecture::kMicroResnetFc:
      return "micro_resnet_fc";
    case Architecture::kMicroResnetNoFc:
      return "micro_resnet_nofc";
    case Architecture::kMlpProbe:
      return "mlp_probe";
  }
  return "unknown";
}

Architecture parse_architecture(const std::string& name) {
  if (name == "micro_resnet_fc") return Architecture::kMicroResnetFc;
  if (name == "micro_resnet_nofc") return Architecture::kMicroResnetNoFc;
  if (name == "mlp_probe") return Architecture::kMlpProbe;
  throw ConfigError("unknown architecture '" + name + "'");
}

void ModelSpec::validate() const {
  if (n_classes < 1) throw ConfigError("model: n_classes must be >= 1");
  if (in_channels == 0 || in_height == 0 || in_width == 0) {
    throw ConfigError("model: input shape must be positive");
  }
  if (widths.empty()) throw ConfigError("model: widths must not be empty");
  for (auto w : widths)
    if (w == 0) throw ConfigError("model: widths must be positive");
  if (arch == Architecture::kMlpProbe) {
    if (in_height % kProbeCells != 0 || in_width % kProbeCells != 0) {
      throw ConfigError("model: mlp_probe input must be divisible into a " +
                        std::to_string(kProbeCells) + "x" +
                        std::to_string(kProbeCells) + " grid");
    }
    return;
  }
  if (blocks.size() != widths.size()) {
    throw ConfigError("model: widths and blocks must have the same length");
  }
  for (auto b : blocks)
    if (b == 0) throw ConfigError("model: every stage needs at least one block");
  if (arch == Architecture::kMicroResnetNoFc && widths.back() != n_classes) {
    throw ConfigError("model: micro_resnet_nofc needs last width (" +
                      std::to_string(widths.back()) + ") == n_classes (" +
                      std::to_string(n_classes) + ")");
  }
}

std::string serialize_spec(const ModelSpec& spec) {
  json j = {{"arch", to_string(spec.arch)},
            {"widths", spec.widths},
            {"blocks", spec.blocks},
            {"n_classes", spec.n_classes},
            {"input", {spec.in_channels, spec.in_height, spec.in_width}}};
  return j.dump();
}

ModelSpec parse_spec(const std::string& json_text) {
  try {
    const json j = json::parse(json_text);
    ModelSpec spec;
    spec.arch = parse_architecture(j.at("arch").get<std::string>());
    spec.widths = j.at("widths").get<std::vector<std::size_t>>();
    spec.blocks = j.at("blocks").get<std::vector<std::size_t>>();
    spec.n_classes = j.at("n_classes").get<std::size_t>();
    const auto input = j.at("input").get<std::vector<std::size_t>>();
    if (input.size() != 3) throw ConfigError("model spec: input needs 3 entries");
    spec.in_channels = input[0];
    spec.in_height = input[1];
    spec.in_width = input[2];
    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model spec: ") + e.what());
  }
}

std::size_t Model::add_param(std::string name, Tensor value) {
  value.set_requires_grad(true);
  params_.push_back(std::move(value));
  names_.push_back(std::move(name));
  return params_.size() - 1;
}

Model::Conv Model::make_conv(const std::string& name, std::size_t cin,
                             std::size_t cout, std::size_t k, std::size_t stride,
                             std::size_t padding, std::mt19937_64& rng) {
  Tensor w({cout, cin, k, k});
  const double bound = std::sqrt(6.0 / static_cast<double>(cin * k * k));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : w.data()) v = dist(rng);
  return Conv{add_param(name + ".weight", std::move(w)), stride, padding};
}

Model::Norm Model::make_norm(const std::string& name, std::size_t channels) {
  Norm n{};
  n.gamma = add_param(name + ".gamma", Tensor({channels}, 1.0));
  n.beta = add_param(name + ".beta", Tensor({channels}, 0.0));
  norms_.emplace_back(channels);
  norm_names_.push_back(name);
  n.state = norms_.size() - 1;
  return n;
}

Model::Linear Model::make_linear(const std::string& name, std::size_t in,
                                 std::size_t out, std::mt19937_64& rng) {
  Tensor w({in, out});
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : w.data()) v = dist(rng);
  Linear l{};
  l.weight = add_param(name + ".weight", std::move(w));
  l.bias = add_param(name + ".bias", Tensor({out}, 0.0));
  return l;
}

Model Model::build(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model model(spec);
  model.input_stats = ChannelStats::identity(spec.in_channels);
  std::mt19937_64 rng(seed);

  if (spec.arch == Architecture::kMlpProbe) {
    const std::size_t features = spec.in_channels * kProbeCells * kProbeCells;
    model.hidden_ = model.make_linear("hidden", features, spec.widths[0], rng);
    model.head_ = model.make_linear("head", spec.widths[0], spec.n_classes, rng);
    return model;
  }

  model.stem_ = model.make_conv("stem.conv", spec.in_channels, spec.widths[0], 3, 1, 1, rng);
  model.stem_bn_ = model.make_norm("stem.bn", spec.widths[0]);
  std::size_t channels = spec.widths[0];
  for (std::size_t s = 0; s < spec.widths.size(); ++s) {
    for (std::size_t b = 0; b < spec.blocks[s]; ++b) {
      const std::string name = "stage" + std::to_string(s) + ".block" + std::to_string(b);
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      const std::size_t out = spec.widths[s];
      Block block{};
      block.conv1 = model.make_conv(name + ".conv1", channels, out, 3, stride, 1, rng);
      block.bn1 = model.make_norm(name + ".bn1", out);
      block.conv2 = model.make_conv(name + ".conv2", out, out, 3, 1, 1, rng);
      block.bn2 = model.make_norm(name + ".bn2", out);
      if (stride != 1 || channels != out) {
        block.proj = model.make_conv(name + ".proj", channels, out, 1, stride, 0, rng);
        block.proj_bn = model.make_norm(name + ".proj_bn", out);
      }
      model.blocks_.push_back(block);
      channels = out;
    }
  }
  if (spec.arch == Architecture::kMicroResnetFc) {
    model.head_ = model.make_linear("head", channels, spec.n_classes, rng);
  }
  return model;
}

Tensor Model::apply(const Conv& c, const Tensor& x, Tape* tape) {
  return conv2d(x, params_[c.weight], {c.stride, c.padding}, tape);
}

Tensor Model::apply(const Norm& n, const Tensor& x, Mode mode, Tape* tape) {
  return batch_norm_2d(x, params_[n.gamma], params_[n.beta], norms_[n.state],
                       mode == Mode::kTrain, tape);
}

Tensor Model::apply(const Linear& l, const Tensor& x, Tape* tape) {
  return add_bias(matmul(x, params_[l.weight], tape), params_[l.bias], tape);
}

ForwardOutput Model::forward(const Tensor& batch, Mode mode, Tape* tape) {
  if (batch.rank() != 4 || batch.dim(1) != spec_.in_channels ||
      batch.dim(2) != spec_.in_height || batch.dim(3) != spec_.in_width) {
    throw DimensionError("model expects m x " + std::to_string(spec_.in_channels) +
                         " x " + std::to_string(spec_.in_height) + " x " +
                         std::to_string(spec_.in_width) + " input, got " +
                         shape_str(batch.shape()));
  }
  const std::size_t m = batch.dim(0);
  ForwardOutput out;

  if (spec_.arch == Architecture::kMlpProbe) {
    Tensor features = grid_avg_pool(batch, kProbeCells, tape);
    Tensor hidden = relu(apply(*hidden_, features, tape), tape);
    const std::size_t width = spec_.widths[0];
    out.tapped_activations = reshape(hidden, {m, width, 1, 1}, tape);
    out.head_input = out.tapped_activations;
    out.logits = apply(*head_, reshape(out.head_input, {m, width}, tape), tape);
    return out;
  }

  Tensor x = relu(apply(*stem_bn_, apply(*stem_, batch, tape), mode, tape), tape);
  for (const auto& block : blocks_) {
    Tensor y = relu(apply(block.bn1, apply(block.conv1, x, tape), mode, tape), tape);
    y = apply(block.bn2, apply(block.conv2, y, tape), mode, tape);
    Tensor shortcut = x;
    if (block.proj) {
      shortcut = apply(*block.proj_bn, apply(*block.proj, x, tape), mode, tape);
    }
    x = relu(add(y, shortcut, tape), tape);
  }
  out.tapped_activations = x;
  out.head_input = x;
  Tensor pooled = global_avg_pool(x, tape);
  out.logits = head_ ? apply(*head_, pooled, tape) : pooled;
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

ModelState Model::snapshot() const {
  ModelState state;
  for (const auto& p : params_) state.parameters.emplace_back(p.data().begin(), p.data().end());
  state.norms = norms_;
  return state;
}

void Model::restore(const ModelState& state) {
  if (state.parameters.size() != params_.size() || state.norms.size() != norms_.size()) {
    throw DimensionError("model state does not match the model structure");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto dst = params_[i].data();
    if (state.parameters[i].size() != dst.size()) {
      throw DimensionError("model state tensor " + names_[i] + " has wrong size");
    }
    std::copy(state.parameters[i].begin(), state.parameters[i].end(), dst.begin());
  }
  norms_ = state.norms;
}

namespace {

constexpr char kMagic[4] = {'D', 'S', 'C', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

void put_floats(std::vector<std::uint8_t>& out, std::span<const double> values) {
  for (double v : values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

}  // namespace

void Model::save(const std::filesystem::path& path) const {
  json tensors = json::array();
  for (std::size_t i = 0; i < params_.size(); ++i)
    tensors.push_back({{"name", names_[i]}, {"shape", params_[i].shape()}});
  for (std::size_t i = 0; i < norms_.size(); ++i) {
    const auto c = norms_[i].running_mean.size();
    tensors.push_back({{"name", norm_names_[i] + ".running_mean"}, {"shape", {c}}});
    tensors.push_back({{"name", norm_names_[i] + ".running_var"}, {"shape", {c}}});
  }
  const json header = {{"spec", json::parse(serialize_spec(spec_))},
                       {"input_stats", {{"mean", input_stats.mean}, {"std", input_stats.stddev}}},
                       {"tensors", tensors}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> bytes(std::begin(kMagic), std::end(kMagic));
  put_u32(bytes, static_cast<std::uint32_t>(text.size()));
  bytes.insert(bytes.end(), text.begin(), text.end());
  for (const auto& p : params_) put_floats(bytes, p.data());
  for (const auto& n : norms_) {
    put_floats(bytes, n.running_mean);
    put_floats(bytes, n.running_var);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError(path.string() + " is not a checkpoint (bad magic)");
  }
  const std::uint32_t header_len = get_u32(bytes.data() + 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(header_len)) {
    throw DataError("checkpoint header truncated");
  }
  json header;
  try {
    header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  }
  Model model = build(parse_spec(header.at("spec").dump()), 0);
  model.input_stats.mean = header.at("input_stats").at("mean").get<std::vector<double>>();
  model.input_stats.stddev = header.at("input_stats").at("std").get<std::vector<double>>();

  std::size_t offset = 8 + header_len;
  auto read_into = [&](std::span<double> dst) {
    if (bytes.size() < offset + 4 * dst.size()) throw DataError("checkpoint payload truncated");
    for (double& v : dst) {
      v = static_cast<double>(std::bit_cast<float>(get_u32(bytes.data() + offset)));
      offset += 4;
    }
  };
  for (auto& p : model.params_) read_into(p.data());
  for (auto& n : model.norms_) {
    read_into(n.running_mean);
    read_into(n.running_var);
  }
  if (offset != bytes.size()) throw DataError("checkpoint has trailing bytes");
  return model;
}

}  // namespace disco
