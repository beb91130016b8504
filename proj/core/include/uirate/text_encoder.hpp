#pragma once

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "uirate/init.hpp"
#include "uirate/tensor.hpp"

namespace uirate {

// Corpus-built lowercase word vocabulary. Ids 0..3 are reserved and stable;
// everything else is assigned by descending frequency, ties lexicographic.
struct Vocabulary {
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kMask = 2;
    static constexpr int kSep = 3;

    std::vector<std::string> id_to_token;
    std::unordered_map<std::string, int> token_to_id;

    Vocabulary();
    int size() const { return static_cast<int>(id_to_token.size()); }
    int id_of(const std::string& token) const;  // UNK fallback

    static Vocabulary build(const std::vector<std::string>& texts, std::size_t max_size = 8192);
    // Rebuild from a serialized id->token list; validates the reserved slots.
    static Vocabulary from_tokens(std::vector<std::string> tokens);
};

// Lowercases and splits on non-alphanumerics; the literal separator token
// "[SEP]" survives as a single token in canonical (uppercase) form.
std::vector<std::string> split_words(const std::string& text);

struct TokenRow {
    std::vector<int> ids;
    std::vector<int> mask;  // 1 on real tokens, 0 on PAD
};

struct TokenBatch {
    std::vector<TokenRow> rows;
    std::size_t size() const { return rows.size(); }
};

// Empty text yields an all-PAD row with an all-zero mask, a legal input.
TokenRow tokenize(const std::string& text, const Vocabulary& vocab, int max_len);

struct TextEncoderConfig {
    int vocab_size = 0;
    int embed_dim = 128;
    int layers = 2;
    int heads = 4;
    int max_len = 64;
    int out_dim = 512;  // d_t

    void validate() const;  // embed_dim must divide evenly across heads
};

// Post-LN transformer stack, mask-aware mean pooling, linear projection,
// output LayerNorm. PAD keys are excluded from attention, so appending PAD
// positions never changes the encoding.
class TextEncoder {
public:
    TextEncoder(const TextEncoderConfig& cfg, std::mt19937_64& rng);

    const TextEncoderConfig& config() const { return cfg_; }

    Tensor contextual_states(const TokenRow& row) const;  // [L, embed_dim]
    Tensor encode_row(const TokenRow& row) const;         // [out_dim]
    Tensor encode(const TokenBatch& batch) const;         // [batch, out_dim]

    void collect_parameters(const std::string& prefix, NamedParams& out) const;

private:
    struct Layer {
        Tensor wq, bq, wk, bk, wv, bv, wo, bo;
        Tensor ln1_g, ln1_b;
        Tensor w1, b1, w2, b2;
        Tensor ln2_g, ln2_b;
    };

    Tensor attention(const Layer& l, const Tensor& x, const std::vector<int>& key_mask) const;

    TextEncoderConfig cfg_;
    Tensor tok_embed_, pos_embed_;
    std::vector<Layer> layers_;
    Tensor proj_w_, proj_b_, out_ln_g_, out_ln_b_;
};

// Elman-style tanh recurrence over the same embeddings, used as the
// recurrent baseline row in the ablation table. Masked steps leave the
// hidden state untouched.
class SimpleRecurrentEncoder {
public:
    SimpleRecurrentEncoder(const TextEncoderConfig& cfg, std::mt19937_64& rng);

    const TextEncoderConfig& config() const { return cfg_; }

    Tensor encode_row(const TokenRow& row) const;  // [out_dim]
    Tensor encode(const TokenBatch& batch) const;

    void collect_parameters(const std::string& prefix, NamedParams& out) const;

private:
    TextEncoderConfig cfg_;
    Tensor embed_, wxh_, whh_, bh_;
    Tensor proj_w_, proj_b_, ln_g_, ln_b_;
};

}  // namespace uirate
