#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "rtnet/normalization.hpp"
#include "rtnet/relation.hpp"
#include "rtnet/tensor.hpp"

namespace rtnet::model {

/// How calendar features enter the model.
enum class TimeMode {
  None,       // no time features at all
  Decoupled,  // "w-o": TimeNet over prediction-window marks, added to the AR output
  Concat,     // "w-i": input-window marks appended to the input channels
};

std::string to_string(TimeMode mode);
TimeMode parse_time_mode(std::string_view name);

struct ModelConfig {
  std::size_t input_length = 168;  // L_in
  std::size_t output_length = 24;  // L_out
  std::size_t variates = 1;        // N
  std::size_t time_features = 0;   // N_time, needed unless time_mode is None
  std::size_t channels = 16;       // D, embedding channels in total
  std::size_t blocks = 3;          // RTBlocks in the deepest CPN branch
  std::size_t groups = 1;          // 1 or N
  std::size_t kernel = 3;
  bool use_relation = false;  // post-multiply the input by the relation matrix
  double theta_degrees = 45.0;
  norm::NormKind norm = norm::NormKind::WN;
  double dropout = 0.1;
  TimeMode time_mode = TimeMode::None;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  /// Channels entering the CPN embeddings.
  std::size_t input_channels() const;
  /// Length of the flattened CPN output per batch item.
  std::size_t feature_size() const;
};

/// A buffer that is state but not a trainable parameter (BN running stats).
struct NamedBuffer {
  std::string name;
  std::vector<double>* values;
};
using BufferList = std::vector<NamedBuffer>;

/// Grouped convolution with its normalization attached: WN reparameterizes
/// the weight, BN/LN follow the convolution when `post_norm` is set.
class ConvUnit {
 public:
  ConvUnit(std::string name, std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
           std::size_t padding, std::size_t groups, norm::NormKind kind, bool post_norm, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, bool training);
  Tensor effective_weight() const;
  void collect(ParamList& params, BufferList& buffers);

  std::size_t out_channels() const { return out_; }

 private:
  std::string name_;
  std::size_t out_, stride_, padding_, groups_;
  norm::NormKind kind_;
  Tensor weight_;  // plain parameterization
  norm::WeightNormParam wn_;
  Tensor bias_;
  std::optional<norm::BatchNormParams> bn_;
  std::optional<norm::LayerNormParams> ln_;
};

/// Grouped fully-connected map (B, F) -> (B, F_out).
class LinearUnit {
 public:
  LinearUnit(std::string name, std::size_t in, std::size_t out, std::size_t groups, norm::NormKind kind,
             std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;
  void collect(ParamList& params);

 private:
  std::string name_;
  std::size_t groups_;
  bool wn_on_;
  Tensor weight_;
  norm::WeightNormParam wn_;
  Tensor bias_;
};

/// Residual block: halves the length, doubles the channels.
class RTBlock {
 public:
  RTBlock(std::string name, std::size_t channels, const ModelConfig& cfg, std::mt19937_64& rng);
  Tensor forward(const Tensor& x, bool training, std::mt19937_64* rng);
  void collect(ParamList& params, BufferList& buffers);

  // Exposed for tests that zero the main path.
  ConvUnit& conv1() { return conv1_; }
  ConvUnit& conv2() { return conv2_; }

 private:
  std::size_t channels_, kernel_, groups_;
  double dropout_;
  ConvUnit conv1_, conv2_;
};

/// Stride-1 residual block doubling the channels.
class TimeBlock {
 public:
  TimeBlock(std::string name, std::size_t channels, const ModelConfig& cfg, std::mt19937_64& rng);
  Tensor forward(const Tensor& x, bool training, std::mt19937_64* rng);
  void collect(ParamList& params, BufferList& buffers);

 private:
  std::size_t groups_;
  double dropout_;
  ConvUnit conv1_, conv2_;
};

/// One CPN extractor: embedding then a stack of RTBlocks over the trailing
/// slice of the input.
class CpnBranch {
 public:
  CpnBranch(std::size_t index, const ModelConfig& cfg, std::mt19937_64& rng);
  Tensor forward(const Tensor& x, bool training, std::mt19937_64* rng);
  void collect(ParamList& params, BufferList& buffers);

  std::size_t slice_length() const { return slice_; }
  std::size_t depth() const { return blocks_.size(); }

 private:
  std::size_t slice_;
  ConvUnit embed_;
  std::vector<RTBlock> blocks_;
};

struct CpnFeatures {
  std::vector<Tensor> branches;  // (B, C_i, L_in / 2^blocks) each
  Tensor concat;                 // (B, feature_size), group-contiguous
};

class TimeNet {
 public:
  TimeNet(const ModelConfig& cfg, std::mt19937_64& rng);
  /// marks (B, L_out, N_time) -> (B, 4D, L_out)
  Tensor forward(const Tensor& marks, bool training, std::mt19937_64* rng);
  void collect(ParamList& params, BufferList& buffers);

 private:
  std::size_t groups_;
  ConvUnit embed_;
  TimeBlock block1_, block2_;
};

/// Inputs of one forward pass. Marks may be left undefined when the time
/// mode does not use them.
struct ModelInput {
  Tensor inputs;        // (B, L_in, N)
  Tensor input_marks;   // (B, L_in, N_time), used by TimeMode::Concat
  Tensor target_marks;  // (B, L_out, N_time), used by TimeMode::Decoupled
};

class RTNet {
 public:
  RTNet(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  /// Frozen relation matrix; required when config().use_relation.
  void set_relation(relation::RelationMatrix m);
  const std::optional<relation::RelationMatrix>& relation() const { return relation_; }

  /// (B, L_in, N) [+ marks] -> (B, C_in, L_in) ready for the CPN.
  Tensor embed_input(const ModelInput& in) const;

  CpnFeatures cpn_forward(const Tensor& embedded, bool training, std::mt19937_64* rng);

  /// End-to-end prediction (B, L_out, N).
  Tensor forward(const ModelInput& in, bool training, std::mt19937_64* rng = nullptr);

  /// Flattened CPN representations (B, feature_size) with gradient.
  Tensor representations(const ModelInput& in, bool training, std::mt19937_64* rng = nullptr);

  /// Prediction with the CPN detached; throws ContractError unless the
  /// backbone is frozen.
  Tensor forward_contrastive(const ModelInput& in, bool training, std::mt19937_64* rng = nullptr);

  void freeze_backbone();
  bool backbone_frozen() const { return frozen_; }

  ParamList parameters();
  ParamList backbone_parameters();
  ParamList head_parameters();
  BufferList buffers();

  /// FNV-1a digest over the bytes of every backbone parameter.
  std::uint64_t backbone_checksum();

 private:
  Tensor head(const Tensor& features, const ModelInput& in, bool training, std::mt19937_64* rng);

  ModelConfig cfg_;
  std::optional<relation::RelationMatrix> relation_;
  std::vector<CpnBranch> branches_;
  LinearUnit fc_;
  std::unique_ptr<TimeNet> timenet_;
  std::unique_ptr<ConvUnit> time_out_;
  bool frozen_ = false;
};

/// Writes a versioned JSON checkpoint (magic "RTNET1").
void save_checkpoint(const std::string& path, RTNet& model);
/// Rebuilds the model from a checkpoint; throws DataError on a bad file.
RTNet load_checkpoint(const std::string& path);

}  // namespace rtnet::model
