#include "stylesel/selector.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <httplib.h>

#include "stylesel/errors.hpp"
#include "stylesel/text.hpp"

namespace stylesel {

using nlohmann::json;

PromptTemplate PromptTemplate::defaults() {
    PromptTemplate t;
    t.selection_instruction =
        "You are the style selector of a speech synthesis system. Pick the label in the "
        "dictionary below that best matches the given description of the desired speaking "
        "style.";
    t.inference_instruction =
        "You are the style selector of a speech synthesis system. The sentence below will be "
        "synthesized as speech. First infer the speaking style the sentence implies, then pick "
        "the label in the dictionary below that best matches that style.";
    t.answer_directive =
        "Answer with a single line of the form:\nINDEX: <k>\nwhere <k> is the index of the "
        "chosen dictionary entry.";
    return t;
}

void validate_selector_config(const SelectorConfig& config) {
    if (!(config.timeout_seconds > 0.0)) {
        throw ValidationError("selector timeout must be positive");
    }
    if (config.max_retries < 0 || config.max_retries > 10) {
        throw ValidationError("max_retries must be in [0, 10]");
    }
    if (config.temperature < 0.0) {
        throw ValidationError("temperature must be non-negative");
    }
    switch (config.backend_kind) {
        case BackendKind::LlmChat:
            if (config.endpoint.empty()) throw ValidationError("llm backend requires an endpoint");
            if (config.model_name.empty()) throw ValidationError("llm backend requires a model name");
            break;
        case BackendKind::EmbeddingCosine:
            if (config.offline_embeddings_path.empty()) {
                if (config.endpoint.empty())
                    throw ValidationError("cosine backend requires an endpoint or an offline embedding file");
                if (config.model_name.empty())
                    throw ValidationError("cosine backend requires a model name");
            }
            break;
        case BackendKind::Mock:
            break;
    }
}

std::string backend_name(const SelectorConfig& config) {
    switch (config.backend_kind) {
        case BackendKind::LlmChat:
            return "llm-chat:" + config.model_name;
        case BackendKind::EmbeddingCosine:
            return config.offline_embeddings_path.empty() ? "embedding-cosine:" + config.model_name
                                                          : "embedding-cosine:offline";
        case BackendKind::Mock:
            return "mock";
    }
    return "unknown";
}

std::string build_llm_prompt(const StylePrompt& prompt, const AnnotationDictionary& dict,
                             const PromptTemplate& tmpl) {
    if (dict.entries.empty()) {
        throw ValidationError("cannot build a prompt against an empty dictionary");
    }
    if (is_blank(prompt.text)) {
        throw ValidationError("prompt text is empty");
    }
    bool inference = prompt.kind == PromptKind::StyleInference;
    std::ostringstream out;
    out << (inference ? tmpl.inference_instruction : tmpl.selection_instruction) << "\n\n";
    out << "Dictionary (index: style label):\n";
    for (const auto& [index, entry] : dict.entries) {
        out << index << ": " << entry.description << "\n";
    }
    out << "\n" << (inference ? "Sentence: " : "Style description: ") << prompt.text << "\n\n";
    out << tmpl.answer_directive << "\n";
    return out.str();
}

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0; }

// All standalone digit runs in order of appearance. A run flanked by another
// alphanumeric character (as in "u001") is not standalone.
std::vector<long long> standalone_integers(const std::string& text) {
    std::vector<long long> out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        std::size_t begin = i;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
        bool left_ok = begin == 0 || !is_word_char(static_cast<unsigned char>(text[begin - 1]));
        bool right_ok = i == text.size() || !is_word_char(static_cast<unsigned char>(text[i]));
        if (left_ok && right_ok && i - begin <= 9) {
            out.push_back(std::stoll(text.substr(begin, i - begin)));
        }
    }
    return out;
}

// Values of every "INDEX: <k>" marker, case-insensitive, in order.
std::vector<long long> index_markers(const std::string& text) {
    static const std::string kWord = "index";
    std::vector<long long> out;
    for (std::size_t i = 0; i + kWord.size() < text.size(); ++i) {
        bool match = true;
        for (std::size_t k = 0; k < kWord.size(); ++k) {
            if (std::tolower(static_cast<unsigned char>(text[i + k])) != kWord[k]) {
                match = false;
                break;
            }
        }
        if (!match) continue;
        if (i > 0 && is_word_char(static_cast<unsigned char>(text[i - 1]))) continue;
        std::size_t j = i + kWord.size();
        while (j < text.size() && (text[j] == ' ' || text[j] == '\t')) ++j;
        if (j >= text.size() || text[j] != ':') continue;
        ++j;
        while (j < text.size() && (text[j] == ' ' || text[j] == '\t')) ++j;
        std::size_t begin = j;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        if (j > begin && j - begin <= 9) {
            out.push_back(std::stoll(text.substr(begin, j - begin)));
        }
    }
    return out;
}

}  // namespace

int parse_llm_response(const std::string& response, const AnnotationDictionary& dict) {
    if (is_blank(response)) {
        throw ResponseParseError("empty backend response", response);
    }
    for (long long k : index_markers(response)) {
        if (k >= 1 && k <= std::numeric_limits<int>::max() && dict.contains(static_cast<int>(k))) {
            return static_cast<int>(k);
        }
    }
    for (long long k : standalone_integers(response)) {
        if (k >= 1 && k <= std::numeric_limits<int>::max() && dict.contains(static_cast<int>(k))) {
            return static_cast<int>(k);
        }
    }
    for (const auto& [index, entry] : dict.entries) {
        if (response.find(entry.description) != std::string::npos) {
            return index;
        }
    }
    throw ResponseParseError("no dictionary index recoverable from backend response", response);
}

nlohmann::json build_chat_request(const SelectorConfig& config, const std::string& prompt_text) {
    json message;
    message["role"] = "user";
    message["content"] = prompt_text;
    json body;
    body["model"] = config.model_name;
    body["temperature"] = config.temperature;
    body["messages"] = json::array({message});
    return body;
}

std::string extract_chat_content(const nlohmann::json& response) {
    try {
        return response.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& ex) {
        throw ResponseParseError(std::string("malformed chat response: ") + ex.what(),
                                 response.dump());
    }
}

nlohmann::json build_embedding_request(const SelectorConfig& config,
                                       const std::vector<std::string>& inputs) {
    json body;
    body["model"] = config.model_name;
    body["input"] = inputs;
    return body;
}

std::vector<std::vector<double>> extract_embeddings(const nlohmann::json& response) {
    std::vector<std::vector<double>> out;
    try {
        for (const auto& item : response.at("data")) {
            out.push_back(item.at("embedding").get<std::vector<double>>());
        }
    } catch (const json::exception& ex) {
        throw ResponseParseError(std::string("malformed embedding response: ") + ex.what(),
                                 response.dump());
    }
    return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ValidationError("cosine similarity requires equal dimensions, got " +
                              std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

// Splits "http://host:port/base" into client root and path prefix.
std::pair<std::string, std::string> split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    std::size_t host_begin = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_begin = url.find('/', host_begin);
    if (path_begin == std::string::npos) {
        return {url, ""};
    }
    std::string base = url.substr(0, path_begin);
    std::string prefix = url.substr(path_begin);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base, prefix};
}

httplib::Headers auth_headers() {
    httplib::Headers headers;
    if (const char* key = std::getenv("FS_TTS_API_KEY"); key && *key) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    return headers;
}

std::string post_json(const std::string& endpoint, const std::string& path,
                      const std::string& body, double timeout_seconds) {
    auto [base, prefix] = split_url(endpoint);
    httplib::Client client(base);
    auto seconds = std::chrono::duration<double>(timeout_seconds);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(seconds));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(seconds));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(seconds));
    auto res = client.Post(prefix + path, auth_headers(), body, "application/json");
    if (!res) {
        throw TransportError("POST " + endpoint + path + " failed: " +
                             httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        throw TransportError("POST " + endpoint + path + " returned status " +
                             std::to_string(res->status) + ": " + res->body);
    }
    return res->body;
}

class HttpChatTransport : public ChatTransport {
public:
    std::string post_chat(const SelectorConfig& config, const std::string& request_body) override {
        return post_json(config.endpoint, "/chat/completions", request_body,
                         config.timeout_seconds);
    }
};

class HttpEmbeddingProvider : public EmbeddingProvider {
public:
    explicit HttpEmbeddingProvider(SelectorConfig config) : config_(std::move(config)) {}

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        json body = build_embedding_request(config_, texts);
        std::string response =
            post_json(config_.endpoint, "/embeddings", body.dump(), config_.timeout_seconds);
        json parsed;
        try {
            parsed = json::parse(response);
        } catch (const json::parse_error& ex) {
            throw ResponseParseError(std::string("embedding response is not JSON: ") + ex.what(),
                                     response);
        }
        auto vectors = extract_embeddings(parsed);
        if (vectors.size() != texts.size()) {
            throw ResponseParseError("embedding response has " + std::to_string(vectors.size()) +
                                         " vectors for " + std::to_string(texts.size()) + " inputs",
                                     response);
        }
        return vectors;
    }

private:
    SelectorConfig config_;
};

// Embeddings read once from a JSON file mapping exact text -> vector.
class OfflineEmbeddingProvider : public EmbeddingProvider {
public:
    explicit OfflineEmbeddingProvider(const std::filesystem::path& file) {
        std::error_code ec;
        if (!std::filesystem::exists(file, ec)) {
            throw ValidationError("offline embedding file not found: " + file.string());
        }
        std::ifstream in(file);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::parse_error& ex) {
            throw ValidationError(file.string() + ": " + ex.what());
        }
        if (!j.is_object()) {
            throw ValidationError(file.string() + ": expected an object mapping text to vectors");
        }
        for (const auto& [text, vec] : j.items()) {
            table_.emplace(text, vec.get<std::vector<double>>());
        }
        origin_ = file.string();
    }

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        std::vector<std::vector<double>> out;
        out.reserve(texts.size());
        for (const auto& text : texts) {
            auto it = table_.find(text);
            if (it == table_.end()) {
                throw ValidationError("text not present in offline embedding file " + origin_ +
                                      ": \"" + text + "\"");
            }
            out.push_back(it->second);
        }
        return out;
    }

private:
    std::unordered_map<std::string, std::vector<double>> table_;
    std::string origin_;
};

}  // namespace

std::shared_ptr<ChatTransport> make_http_chat_transport() {
    return std::make_shared<HttpChatTransport>();
}

std::shared_ptr<EmbeddingProvider> make_http_embedding_provider(const SelectorConfig& config) {
    return std::make_shared<HttpEmbeddingProvider>(config);
}

std::shared_ptr<EmbeddingProvider> make_offline_embedding_provider(
    const std::filesystem::path& file) {
    return std::make_shared<OfflineEmbeddingProvider>(file);
}

Selector::Selector(SelectorConfig config) : config_(std::move(config)) {
    validate_selector_config(config_);
    if (config_.backend_kind == BackendKind::LlmChat) {
        chat_ = make_http_chat_transport();
    } else if (config_.backend_kind == BackendKind::EmbeddingCosine) {
        embedder_ = config_.offline_embeddings_path.empty()
                        ? make_http_embedding_provider(config_)
                        : make_offline_embedding_provider(config_.offline_embeddings_path);
    }
}

Selector::Selector(SelectorConfig config, std::shared_ptr<ChatTransport> chat,
                   std::shared_ptr<EmbeddingProvider> embedder)
    : config_(std::move(config)), chat_(std::move(chat)), embedder_(std::move(embedder)) {
    validate_selector_config(config_);
}

RetrievalResult Selector::select(const StylePrompt& prompt,
                                 const AnnotationDictionary& dict) const {
    if (dict.entries.empty()) {
        throw ValidationError("cannot select against an empty dictionary");
    }
    if (is_blank(prompt.text)) {
        throw ValidationError("prompt text is empty");
    }
    switch (config_.backend_kind) {
        case BackendKind::LlmChat:
            return select_llm(prompt, dict);
        case BackendKind::EmbeddingCosine:
            return select_cosine(prompt, dict);
        case BackendKind::Mock:
            return select_mock(prompt, dict);
    }
    throw ValidationError("unknown backend kind");
}

RetrievalResult Selector::select_llm(const StylePrompt& prompt,
                                     const AnnotationDictionary& dict) const {
    if (!chat_) {
        throw ValidationError("llm backend has no chat transport");
    }
    std::string prompt_text = build_llm_prompt(prompt, dict, config_.prompt_template);
    std::string request_body = build_chat_request(config_, prompt_text).dump();
    std::string last_error;
    int attempts = config_.max_retries + 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        try {
            std::string body = chat_->post_chat(config_, request_body);
            json parsed;
            try {
                parsed = json::parse(body);
            } catch (const json::parse_error& ex) {
                throw ResponseParseError(std::string("chat response is not JSON: ") + ex.what(),
                                         body);
            }
            std::string content = extract_chat_content(parsed);
            int index = parse_llm_response(content, dict);
            return RetrievalResult{index, dict.at(index).description, backend_name(config_),
                                   content};
        } catch (const TransportError& ex) {
            last_error = ex.what();
        } catch (const ResponseParseError& ex) {
            last_error = ex.what();
        }
    }
    throw SelectionError("llm selection failed after " + std::to_string(attempts) +
                         " attempt(s); last error: " + last_error);
}

std::vector<std::vector<double>> Selector::embed_cached(
    const std::vector<std::string>& texts) const {
    std::vector<std::vector<double>> out(texts.size());
    std::vector<std::string> missing;
    std::vector<std::size_t> missing_slots;
    {
        std::lock_guard<std::mutex> lock(cache_mutex_);
        for (std::size_t i = 0; i < texts.size(); ++i) {
            auto it = embedding_cache_.find(texts[i]);
            if (it != embedding_cache_.end()) {
                out[i] = it->second;
            } else {
                missing.push_back(texts[i]);
                missing_slots.push_back(i);
            }
        }
    }
    if (!missing.empty()) {
        auto vectors = embedder_->embed(missing);
        std::lock_guard<std::mutex> lock(cache_mutex_);
        for (std::size_t i = 0; i < missing.size(); ++i) {
            embedding_cache_[missing[i]] = vectors[i];
            out[missing_slots[i]] = std::move(vectors[i]);
        }
    }
    return out;
}

RetrievalResult Selector::select_cosine(const StylePrompt& prompt,
                                        const AnnotationDictionary& dict) const {
    if (!embedder_) {
        throw ValidationError("cosine backend has no embedding provider");
    }
    std::vector<std::string> texts;
    texts.reserve(dict.size() + 1);
    texts.push_back(prompt.text);
    std::vector<int> indices;
    indices.reserve(dict.size());
    for (const auto& [index, entry] : dict.entries) {
        texts.push_back(entry.description);
        indices.push_back(index);
    }
    auto vectors = embed_cached(texts);
    const auto& query = vectors[0];
    for (std::size_t i = 1; i < vectors.size(); ++i) {
        if (vectors[i].size() != query.size()) {
            throw ValidationError("embedding dimensionality mismatch: query has " +
                                  std::to_string(query.size()) + ", candidate " +
                                  std::to_string(indices[i - 1]) + " has " +
                                  std::to_string(vectors[i].size()));
        }
    }
    int best_index = indices[0];
    double best_score = -2.0;
    json scores = json::array();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        double score = cosine_similarity(query, vectors[i + 1]);
        scores.push_back(json::array({indices[i], score}));
        if (score > best_score) {  // ties keep the smallest index (ascending scan)
            best_score = score;
            best_index = indices[i];
        }
    }
    return RetrievalResult{best_index, dict.at(best_index).description, backend_name(config_),
                           scores.dump()};
}

RetrievalResult Selector::select_mock(const StylePrompt& prompt,
                                      const AnnotationDictionary& dict) const {
    if (config_.mock_mapping.empty()) {
        throw ValidationError("mock backend has an empty mapping");
    }
    auto finish = [&](int index, const json& evidence) {
        return RetrievalResult{index, dict.at(index).description, backend_name(config_),
                               evidence.dump()};
    };
    // Exact text match first, as long as it points inside the dictionary.
    if (auto it = config_.mock_mapping.find(prompt.text);
        it != config_.mock_mapping.end() && dict.contains(it->second)) {
        return finish(it->second, json{{"match", "exact"}});
    }
    bool found = false;
    std::size_t best_overlap = 0;
    int best_index = 0;
    for (const auto& [key, index] : config_.mock_mapping) {
        if (!dict.contains(index)) {
            continue;
        }
        std::size_t overlap = token_overlap(prompt.text, key);
        if (!found || overlap > best_overlap || (overlap == best_overlap && index < best_index)) {
            found = true;
            best_overlap = overlap;
            best_index = index;
        }
    }
    if (!found) {
        throw SelectionError("mock mapping has no candidate inside the dictionary");
    }
    return finish(best_index, json{{"match", "token_overlap"}, {"overlap", best_overlap}});
}

std::vector<double> Selector::embed_text(const std::string& text) const {
    if (is_blank(text)) {
        throw ValidationError("cannot embed empty text");
    }
    if (!embedder_) {
        throw ValidationError("this backend has no embedding provider");
    }
    return embed_cached({text})[0];
}

RetrievalResult select(const StylePrompt& prompt, const AnnotationDictionary& dict,
                       const SelectorConfig& config) {
    return Selector(config).select(prompt, dict);
}

std::vector<double> embed_text(const std::string& text, const SelectorConfig& config) {
    SelectorConfig cfg = config;
    if (cfg.backend_kind != BackendKind::EmbeddingCosine) {
        cfg.backend_kind = BackendKind::EmbeddingCosine;
    }
    return Selector(cfg).embed_text(text);
}

}  // namespace stylesel
