#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "disco/data.hpp"
#include "disco/ops.hpp"
#include "disco/tensor.hpp"

namespace disco {

enum class Architecture {
  kMicroResnetFc,    // residual stages, global pooling, linear head
  kMicroResnetNoFc,  // last stage has n_classes channels, pooled directly
  kMlpProbe,         // grid-pooled input, one hidden layer
};

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& name);

struct ModelSpec {
  Architecture arch = Architecture::kMicroResnetNoFc;
  std::vector<std::size_t> widths{16, 32, 64};
  std::vector<std::size_t> blocks{2, 2, 2};
  std::size_t n_classes = 10;
  std::size_t in_channels = 3;
  std::size_t in_height = 32;
  std::size_t in_width = 32;

  // Throws ConfigError. For kMicroResnetNoFc the last width must equal
  // n_classes; kMlpProbe uses widths[0] as the hidden size and ignores blocks.
  void validate() const;
};

// JSON text form used in checkpoint headers.
std::string serialize_spec(const ModelSpec& spec);
ModelSpec parse_spec(const std::string& json_text);

enum class Mode { kTrain, kEval };

struct ForwardOutput {
  Tensor logits;              // m x n
  Tensor tapped_activations;  // last convolutional layer output, m x c x h x w
  Tensor head_input;          // tensor consumed by the classification head
};

/// A snapshot of all learnable parameters and normalization statistics.
struct ModelState {
  std::vector<std::vector<double>> parameters;
  std::vector<BatchNormState> norms;
};

/// Micro residual classifier.
///
/// Parameters are created in a fixed build order from a seeded generator
/// (fan-in scaled uniform: U(-sqrt(6/fan_in), sqrt(6/fan_in)) for
/// convolutions, U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for linear weights, zero
/// biases, unit/zero batch-norm scale/shift), so equal seeds give
/// bit-identical models.
class Model {
 public:
  static Model build(const ModelSpec& spec, std::uint64_t seed);

  ForwardOutput forward(const Tensor& batch, Mode mode, Tape* tape = nullptr);

  const ModelSpec& spec() const { return spec_; }
  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }
  std::size_t parameter_count() const;
  std::vector<BatchNormState>& norms() { return norms_; }

  // Normalization applied to raw images before forward(); stored with
  // checkpoints so a saved model can be evaluated on its own.
  ChannelStats input_stats;

  ModelState snapshot() const;
  void restore(const ModelState& state);

  /// Binary checkpoint: "DSC1", u32 little-endian header length, a JSON
  /// header (spec, input statistics, tensor names and shapes), then every
  /// parameter tensor followed by each batch-norm running mean and variance,
  /// as little-endian float32 in build order.
  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

 private:
  struct Conv {
    std::size_t weight;
    std::size_t stride;
    std::size_t padding;
  };
  struct Norm {
    std::size_t gamma;
    std::size_t beta;
    std::size_t state;
  };
  struct Block {
    Conv conv1;
    Norm bn1;
    Conv conv2;
    Norm bn2;
    std::optional<Conv> proj;
    std::optional<Norm> proj_bn;
  };
  struct Linear {
    std::size_t weight;  // in x out
    std::size_t bias;
  };

  explicit Model(ModelSpec spec) : spec_(std::move(spec)) {}

  std::size_t add_param(std::string name, Tensor value);
  Conv make_conv(const std::string& name, std::size_t cin, std::size_t cout,
                 std::size_t k, std::size_t stride, std::size_t padding,
                 std::mt19937_64& rng);
  Norm make_norm(const std::string& name, std::size_t channels);
  Linear make_linear(const std::string& name, std::size_t in, std::size_t out,
                     std::mt19937_64& rng);

  Tensor apply(const Conv& c, const Tensor& x, Tape* tape);
  Tensor apply(const Norm& n, const Tensor& x, Mode mode, Tape* tape);
  Tensor apply(const Linear& l, const Tensor& x, Tape* tape);

  ModelSpec spec_;
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
  std::vector<BatchNormState> norms_;
  std::vector<std::string> norm_names_;

  std::optional<Conv> stem_;
  std::optional<Norm> stem_bn_;
  std::vector<Block> blocks_;
  std::optional<Linear> head_;
  std::optional<Linear> hidden_;
};

inline constexpr std::size_t kProbeCells = 4;

}  // namespace disco
