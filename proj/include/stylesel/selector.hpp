#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "stylesel/annotation.hpp"

namespace stylesel {

enum class PromptKind {
    StyleSelection,  // explicit style description from the user
    StyleInference,  // the synthesis text itself; style must be inferred
};

struct StylePrompt {
    PromptKind kind = PromptKind::StyleSelection;
    std::string text;
};

// The selection outcome plus enough evidence to audit it later.
struct RetrievalResult {
    int index = 0;              // always a key of the queried dictionary
    std::string description;    // copy of the matched entry's label
    std::string backend;        // backend identifier, e.g. "llm-chat:gpt-4"
    std::string raw_output;     // full LLM reply, or per-candidate scores as JSON

    bool operator==(const RetrievalResult&) const = default;
};

enum class BackendKind {
    LlmChat,
    EmbeddingCosine,
    Mock,
};

// Instruction texts around the serialized dictionary. Replace any field to
// rephrase the prompt without touching code.
struct PromptTemplate {
    std::string selection_instruction;
    std::string inference_instruction;
    std::string answer_directive;

    static PromptTemplate defaults();
};

struct SelectorConfig {
    BackendKind backend_kind = BackendKind::Mock;
    std::string model_name;
    std::string endpoint;                 // base URL, e.g. "https://api.openai.com/v1"
    int max_retries = 2;                  // extra attempts after the first, <= 10
    double timeout_seconds = 30.0;
    double temperature = 0.0;
    std::string offline_embeddings_path;  // non-empty selects offline embedding mode
    std::map<std::string, int> mock_mapping;  // prompt text -> dictionary index
    PromptTemplate prompt_template = PromptTemplate::defaults();
};

void validate_selector_config(const SelectorConfig& config);

// Stable identifier recorded in RetrievalResult::backend.
std::string backend_name(const SelectorConfig& config);

// One instruction string: task framing, the dictionary as "index: label"
// lines, the user text, and the INDEX answer directive.
std::string build_llm_prompt(const StylePrompt& prompt, const AnnotationDictionary& dict,
                             const PromptTemplate& tmpl = PromptTemplate::defaults());

// Recovers the selected index from an LLM reply. Priority:
//   1. an "INDEX: <k>" marker with k a dictionary key,
//   2. the first standalone integer that is a dictionary key,
//   3. an entry description appearing verbatim (smallest index wins).
// Throws ResponseParseError when none applies.
int parse_llm_response(const std::string& response, const AnnotationDictionary& dict);

// Wire formats, kept as pure functions so they can be pinned byte-for-byte.
// Chat:      POST {endpoint}/chat/completions
//            {"messages":[{"content":...,"role":"user"}],"model":...,"temperature":...}
//            answer read from choices[0].message.content
// Embedding: POST {endpoint}/embeddings   {"input":[...],"model":...}
//            vectors read from data[i].embedding
nlohmann::json build_chat_request(const SelectorConfig& config, const std::string& prompt_text);
std::string extract_chat_content(const nlohmann::json& response);
nlohmann::json build_embedding_request(const SelectorConfig& config,
                                       const std::vector<std::string>& inputs);
std::vector<std::vector<double>> extract_embeddings(const nlohmann::json& response);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Transport seam for the chat backend; tests swap in a scripted fake.
class ChatTransport {
public:
    virtual ~ChatTransport() = default;
    // POSTs request_body to {endpoint}/chat/completions, returns the raw body.
    virtual std::string post_chat(const SelectorConfig& config, const std::string& request_body) = 0;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

std::shared_ptr<ChatTransport> make_http_chat_transport();
std::shared_ptr<EmbeddingProvider> make_http_embedding_provider(const SelectorConfig& config);
std::shared_ptr<EmbeddingProvider> make_offline_embedding_provider(const std::filesystem::path& file);

// A shareable read-only handle around one configured backend. Description
// embeddings are cached per exact text; select() may be called concurrently.
class Selector {
public:
    explicit Selector(SelectorConfig config);
    Selector(SelectorConfig config, std::shared_ptr<ChatTransport> chat,
             std::shared_ptr<EmbeddingProvider> embedder);

    const SelectorConfig& config() const { return config_; }
    std::string name() const { return backend_name(config_); }

    // Always returns an index present in dict, or throws.
    RetrievalResult select(const StylePrompt& prompt, const AnnotationDictionary& dict) const;

    std::vector<double> embed_text(const std::string& text) const;

private:
    RetrievalResult select_llm(const StylePrompt& prompt, const AnnotationDictionary& dict) const;
    RetrievalResult select_cosine(const StylePrompt& prompt, const AnnotationDictionary& dict) const;
    RetrievalResult select_mock(const StylePrompt& prompt, const AnnotationDictionary& dict) const;
    std::vector<std::vector<double>> embed_cached(const std::vector<std::string>& texts) const;

    SelectorConfig config_;
    std::shared_ptr<ChatTransport> chat_;
    std::shared_ptr<EmbeddingProvider> embedder_;

    mutable std::mutex cache_mutex_;
    mutable std::unordered_map<std::string, std::vector<double>> embedding_cache_;
};

// One-shot conveniences over a temporary Selector.
RetrievalResult select(const StylePrompt& prompt, const AnnotationDictionary& dict,
                       const SelectorConfig& config);
std::vector<double> embed_text(const std::string& text, const SelectorConfig& config);

}  // namespace stylesel
