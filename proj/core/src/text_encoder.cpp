#include "uirate/text_encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "uirate/activations.hpp"
#include "uirate/ops.hpp"

namespace uirate {

namespace {
constexpr const char* kReserved[4] = {"[PAD]", "[UNK]", "[MASK]", "[SEP]"};
}

Vocabulary::Vocabulary() {
    for (int i = 0; i < 4; ++i) {
        id_to_token.emplace_back(kReserved[i]);
        token_to_id.emplace(kReserved[i], i);
    }
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnk : it->second;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, std::size_t max_size) {
    if (max_size < 5) throw std::invalid_argument("Vocabulary::build: max_size must exceed the reserved ids");
    std::map<std::string, std::size_t> freq;
    for (const auto& text : texts) {
        for (auto& w : split_words(text)) {
            if (w != "[SEP]") ++freq[w];
        }
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocabulary v;
    const std::size_t keep = std::min(ranked.size(), max_size - 4);
    for (std::size_t i = 0; i < keep; ++i) {
        v.token_to_id.emplace(ranked[i].first, v.size());
        v.id_to_token.push_back(ranked[i].first);
    }
    return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
    if (tokens.size() < 4) throw std::invalid_argument("Vocabulary::from_tokens: reserved ids missing");
    for (int i = 0; i < 4; ++i) {
        if (tokens[static_cast<std::size_t>(i)] != kReserved[i]) {
            throw std::invalid_argument("Vocabulary::from_tokens: reserved slot " + std::to_string(i) +
                                        " holds '" + tokens[static_cast<std::size_t>(i)] + "'");
        }
    }
    Vocabulary v;
    v.id_to_token = std::move(tokens);
    v.token_to_id.clear();
    for (std::size_t i = 0; i < v.id_to_token.size(); ++i) {
        if (!v.token_to_id.emplace(v.id_to_token[i], static_cast<int>(i)).second) {
            throw std::invalid_argument("Vocabulary::from_tokens: duplicate token '" + v.id_to_token[i] + "'");
        }
    }
    return v;
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    std::size_t i = 0;
    while (i < text.size()) {
        // Case-insensitive "[sep]" survives splitting as the canonical token.
        if (text[i] == '[' && i + 5 <= text.size()) {
            std::string probe = text.substr(i, 5);
            std::transform(probe.begin(), probe.end(), probe.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            if (probe == "[sep]") {
                if (!cur.empty()) {
                    out.push_back(std::move(cur));
                    cur.clear();
                }
                out.emplace_back("[SEP]");
                i += 5;
                continue;
            }
        }
        const auto c = static_cast<unsigned char>(text[i]);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
        ++i;
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

TokenRow tokenize(const std::string& text, const Vocabulary& vocab, int max_len) {
    if (max_len < 1) throw std::invalid_argument("tokenize: max_len must be positive");
    TokenRow row;
    row.ids.assign(static_cast<std::size_t>(max_len), Vocabulary::kPad);
    row.mask.assign(static_cast<std::size_t>(max_len), 0);
    const auto words = split_words(text);
    const std::size_t n = std::min(words.size(), static_cast<std::size_t>(max_len));
    for (std::size_t i = 0; i < n; ++i) {
        row.ids[i] = vocab.id_of(words[i]);
        row.mask[i] = 1;
    }
    return row;
}

void TextEncoderConfig::validate() const {
    // vocab_size 0 is legal here: it defers to the corpus vocabulary fitted
    // at model construction. A concrete size must cover the reserved ids.
    if (vocab_size != 0 && vocab_size < 5) {
        throw std::invalid_argument("TextEncoderConfig: vocab_size must cover reserved ids");
    }
    if (vocab_size < 0) throw std::invalid_argument("TextEncoderConfig: vocab_size must not be negative");
    if (embed_dim < 1 || layers < 0 || heads < 1 || max_len < 1 || out_dim < 1) {
        throw std::invalid_argument("TextEncoderConfig: dimensions must be positive");
    }
    if (embed_dim % heads != 0) {
        throw std::invalid_argument("TextEncoderConfig: embed_dim " + std::to_string(embed_dim) +
                                    " not divisible by heads " + std::to_string(heads));
    }
}

TextEncoder::TextEncoder(const TextEncoderConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.vocab_size == 0) {
        throw std::invalid_argument("TextEncoder: vocab_size is unresolved; fit a vocabulary first");
    }
    const int d = cfg_.embed_dim;
    tok_embed_ = randn_param({cfg_.vocab_size, d}, d, rng);
    pos_embed_ = zeros_param({cfg_.max_len, d});
    layers_.reserve(static_cast<std::size_t>(cfg_.layers));
    for (int i = 0; i < cfg_.layers; ++i) {
        Layer l;
        l.wq = randn_param({d, d}, d, rng);
        l.bq = zeros_param({d});
        l.wk = randn_param({d, d}, d, rng);
        l.bk = zeros_param({d});
        l.wv = randn_param({d, d}, d, rng);
        l.bv = zeros_param({d});
        l.wo = randn_param({d, d}, d, rng);
        l.bo = zeros_param({d});
        l.ln1_g = ones_param({d});
        l.ln1_b = zeros_param({d});
        l.w1 = randn_param({d, 4 * d}, d, rng);
        l.b1 = zeros_param({4 * d});
        l.w2 = randn_param({4 * d, d}, 4 * d, rng);
        l.b2 = zeros_param({d});
        l.ln2_g = ones_param({d});
        l.ln2_b = zeros_param({d});
        layers_.push_back(std::move(l));
    }
    proj_w_ = randn_param({d, cfg_.out_dim}, d, rng);
    proj_b_ = zeros_param({cfg_.out_dim});
    out_ln_g_ = ones_param({cfg_.out_dim});
    out_ln_b_ = zeros_param({cfg_.out_dim});
}

Tensor TextEncoder::attention(const Layer& l, const Tensor& x, const std::vector<int>& key_mask) const {
    const int d = cfg_.embed_dim;
    const int dh = d / cfg_.heads;
    const Tensor q = linear(x, l.wq, l.bq);
    const Tensor k = linear(x, l.wk, l.bk);
    const Tensor v = linear(x, l.wv, l.bv);
    std::vector<Tensor> heads;
    heads.reserve(static_cast<std::size_t>(cfg_.heads));
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < cfg_.heads; ++h) {
        const int c0 = h * dh, c1 = c0 + dh;
        const Tensor qh = slice_cols(q, c0, c1);
        const Tensor kh = slice_cols(k, c0, c1);
        const Tensor vh = slice_cols(v, c0, c1);
        const Tensor scores = scale_shift(matmul(qh, transpose(kh)), scale);
        const Tensor probs = masked_softmax_rows(scores, key_mask);
        heads.push_back(matmul(probs, vh));
    }
    return linear(concat(heads, 1), l.wo, l.bo);
}

Tensor TextEncoder::contextual_states(const TokenRow& row) const {
    const int len = static_cast<int>(row.ids.size());
    if (len < 1 || len > cfg_.max_len) {
        throw std::invalid_argument("encode_text: sequence length " + std::to_string(len) +
                                    " outside [1, " + std::to_string(cfg_.max_len) + "]");
    }
    if (row.mask.size() != row.ids.size()) throw std::invalid_argument("encode_text: ids/mask length mismatch");
    std::vector<int> positions(static_cast<std::size_t>(len));
    std::iota(positions.begin(), positions.end(), 0);
    Tensor x = add(embedding_rows(tok_embed_, row.ids), embedding_rows(pos_embed_, positions));
    for (const auto& l : layers_) {
        x = layer_norm(add(x, attention(l, x, row.mask)), l.ln1_g, l.ln1_b);
        const Tensor f = linear(activate(linear(x, l.w1, l.b1), ActivationKind::Gelu), l.w2, l.b2);
        x = layer_norm(add(x, f), l.ln2_g, l.ln2_b);
    }
    return x;
}

Tensor TextEncoder::encode_row(const TokenRow& row) const {
    const Tensor pooled = masked_mean_rows(contextual_states(row), row.mask);
    return layer_norm(linear(pooled, proj_w_, proj_b_), out_ln_g_, out_ln_b_);
}

Tensor TextEncoder::encode(const TokenBatch& batch) const {
    if (batch.rows.empty()) throw std::invalid_argument("encode_text: empty batch");
    std::vector<Tensor> rows;
    rows.reserve(batch.rows.size());
    for (const auto& r : batch.rows) rows.push_back(encode_row(r));
    return stack_rows(rows);
}

void TextEncoder::collect_parameters(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".tok_embed", tok_embed_);
    out.emplace_back(prefix + ".pos_embed", pos_embed_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        const std::string p = prefix + ".layer" + std::to_string(i);
        out.emplace_back(p + ".wq", l.wq);
        out.emplace_back(p + ".bq", l.bq);
        out.emplace_back(p + ".wk", l.wk);
        out.emplace_back(p + ".bk", l.bk);
        out.emplace_back(p + ".wv", l.wv);
        out.emplace_back(p + ".bv", l.bv);
        out.emplace_back(p + ".wo", l.wo);
        out.emplace_back(p + ".bo", l.bo);
        out.emplace_back(p + ".ln1_g", l.ln1_g);
        out.emplace_back(p + ".ln1_b", l.ln1_b);
        out.emplace_back(p + ".ffn_w1", l.w1);
        out.emplace_back(p + ".ffn_b1", l.b1);
        out.emplace_back(p + ".ffn_w2", l.w2);
        out.emplace_back(p + ".ffn_b2", l.b2);
        out.emplace_back(p + ".ln2_g", l.ln2_g);
        out.emplace_back(p + ".ln2_b", l.ln2_b);
    }
    out.emplace_back(prefix + ".proj_w", proj_w_);
    out.emplace_back(prefix + ".proj_b", proj_b_);
    out.emplace_back(prefix + ".out_ln_g", out_ln_g_);
    out.emplace_back(prefix + ".out_ln_b", out_ln_b_);
}

SimpleRecurrentEncoder::SimpleRecurrentEncoder(const TextEncoderConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.vocab_size == 0) {
        throw std::invalid_argument("SimpleRecurrentEncoder: vocab_size is unresolved; fit a vocabulary first");
    }
    const int d = cfg_.embed_dim;
    embed_ = randn_param({cfg_.vocab_size, d}, d, rng);
    wxh_ = randn_param({d, d}, d, rng);
    whh_ = randn_param({d, d}, d, rng);
    bh_ = zeros_param({d});
    proj_w_ = randn_param({d, cfg_.out_dim}, d, rng);
    proj_b_ = zeros_param({cfg_.out_dim});
    ln_g_ = ones_param({cfg_.out_dim});
    ln_b_ = zeros_param({cfg_.out_dim});
}

Tensor SimpleRecurrentEncoder::encode_row(const TokenRow& row) const {
    const int len = static_cast<int>(row.ids.size());
    if (len < 1 || len > cfg_.max_len) {
        throw std::invalid_argument("encode_text: sequence length " + std::to_string(len) +
                                    " outside [1, " + std::to_string(cfg_.max_len) + "]");
    }
    if (row.mask.size() != row.ids.size()) throw std::invalid_argument("encode_text: ids/mask length mismatch");
    const Tensor x = embedding_rows(embed_, row.ids);
    Tensor h = Tensor::zeros({cfg_.embed_dim});
    for (int t = 0; t < len; ++t) {
        if (row.mask[static_cast<std::size_t>(t)] == 0) continue;
        const Tensor pre = add(linear(::uirate::row(x, t), wxh_, bh_), linear(h, whh_, Tensor()));
        h = tanh(pre);
    }
    return layer_norm(linear(h, proj_w_, proj_b_), ln_g_, ln_b_);
}

Tensor SimpleRecurrentEncoder::encode(const TokenBatch& batch) const {
    if (batch.rows.empty()) throw std::invalid_argument("encode_text: empty batch");
    std::vector<Tensor> rows;
    rows.reserve(batch.rows.size());
    for (const auto& r : batch.rows) rows.push_back(encode_row(r));
    return stack_rows(rows);
}

void SimpleRecurrentEncoder::collect_parameters(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".embed", embed_);
    out.emplace_back(prefix + ".wxh", wxh_);
    out.emplace_back(prefix + ".whh", whh_);
    out.emplace_back(prefix + ".bh", bh_);
    out.emplace_back(prefix + ".proj_w", proj_w_);
    out.emplace_back(prefix + ".proj_b", proj_b_);
    out.emplace_back(prefix + ".ln_g", ln_g_);
    out.emplace_back(prefix + ".ln_b", ln_b_);
}

}  // namespace uirate
