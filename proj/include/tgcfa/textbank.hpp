#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tgcfa/common.hpp"

namespace tgcfa::textbank {

struct LabelDescriptor {
  int label_id = 0;
  std::string label_name;
  std::vector<std::string> descriptions;
};

struct DescriptionSet {
  std::vector<LabelDescriptor> labels;  // sorted by label_id after validation
  std::optional<int> background_id;

  int size() const { return static_cast<int>(labels.size()); }
  std::vector<std::string> names() const;
  // Sorts labels by id and checks the container invariants.
  void validate();
};

DescriptionSet parse_descriptions(const std::string& json_text);
DescriptionSet load_descriptions(const std::string& path);

using EmbeddingVector = Eigen::VectorXd;

// Frozen text encoder. Implementations must be pure: the same text always
// yields the same vector.
class TextEncoderProvider {
 public:
  virtual ~TextEncoderProvider() = default;
  virtual std::string fingerprint() const = 0;
  virtual int dimension() const = 0;
  // Maximum number of tokens consumed; longer inputs are truncated.
  virtual int token_limit() const = 0;
  virtual EmbeddingVector embed(const std::vector<std::string>& tokens) const = 0;
};

std::vector<std::string> tokenize(const std::string& text);

// Embeds one description. Truncation is reported through `warnings` when
// given.
EmbeddingVector embed_text(const TextEncoderProvider& encoder, const std::string& text,
                           std::vector<std::string>* warnings = nullptr);

// Deterministic provider: every token maps to a unit Gaussian direction seeded
// by the FNV-1a hash of the token; a text is the normalized token sum.
class StubTextEncoder final : public TextEncoderProvider {
 public:
  explicit StubTextEncoder(int dimension = 64, int token_limit = 77, std::uint64_t seed = 0);
  std::string fingerprint() const override;
  int dimension() const override { return dim_; }
  int token_limit() const override { return token_limit_; }
  EmbeddingVector embed(const std::vector<std::string>& tokens) const override;

  EmbeddingVector token_direction(const std::string& token) const;

 private:
  int dim_;
  int token_limit_;
  std::uint64_t seed_;
};

// Precomputed per-variant embeddings exported by an external script.
// File layout: {"encoder": str, "embeddings": [{"text": str, "vector": [..]}, ..]}.
// Lookup is by exact description text.
class ImportedTextEncoder final : public TextEncoderProvider {
 public:
  static ImportedTextEncoder from_file(const std::string& path);
  static ImportedTextEncoder from_json(const std::string& json_text);

  std::string fingerprint() const override { return "import:" + encoder_name_; }
  int dimension() const override { return dim_; }
  int token_limit() const override { return 1 << 30; }
  EmbeddingVector embed(const std::vector<std::string>& tokens) const override;
  EmbeddingVector lookup(const std::string& text) const;

 private:
  std::string encoder_name_;
  int dim_ = 0;
  std::vector<std::pair<std::string, EmbeddingVector>> entries_;
};

// Live pretrained encoder: runs tools/export_text_embeddings.py against a local
// model directory and serves the result as an imported table.
std::unique_ptr<TextEncoderProvider> make_pretrained_encoder(const std::string& model_dir,
                                                             const DescriptionSet& set);

EmbeddingVector aggregate_label_embedding(std::span<const EmbeddingVector> variants);

struct TextEmbeddingTable {
  Matrix<float> embeddings;  // n x k, row r is the mean embedding of label r
  std::vector<std::string> label_names;
  std::string encoder_fingerprint;

  int n() const { return static_cast<int>(embeddings.rows()); }
  int k() const { return static_cast<int>(embeddings.cols()); }
  bool operator==(const TextEmbeddingTable& other) const;
};

struct BuildOptions {
  bool normalize_variants = false;
  std::vector<std::string>* warnings = nullptr;
};

TextEmbeddingTable build_table(const DescriptionSet& set, const TextEncoderProvider& encoder,
                               const BuildOptions& options = {});

// Binary container: "TGTB", u32 version=1, u32 n, u32 k, u32 fingerprint
// length, fingerprint bytes, n*k little-endian float32 row-major. Label names
// ride inside the fingerprint after ";labels=" as a JSON array.
void save_table(const TextEmbeddingTable& table, const std::string& path);
TextEmbeddingTable load_table(const std::string& path);

}  // namespace tgcfa::textbank
