#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stylesel/annotation.hpp"
#include "stylesel/latent.hpp"
#include "stylesel/selector.hpp"

namespace stylesel {

// Everything a synthesis backend needs for one utterance, plus the retrieval
// audit trail.
struct SynthesisRequest {
    std::string text;
    std::string reference_id;
    std::vector<double> latent;
    double duration_scale = 1.0;
    RetrievalResult retrieval;

    bool operator==(const SynthesisRequest&) const = default;
};

// Wire schema sent to the synthesis backend:
//   {"duration_scale": number, "latent": [...], "reference_id": str, "text": str}
// (keys lexicographic; see README for the canonical-JSON rule)
nlohmann::json synthesis_wire_payload(const SynthesisRequest& request);

// Full record including the retrieval audit; this is the journal line format.
nlohmann::json synthesis_request_to_json(const SynthesisRequest& request);
SynthesisRequest synthesis_request_from_json(const nlohmann::json& j);

// prompt -> retrieval -> latent lookup -> reparameterized sample -> duration
// scale -> assembled request. Deterministic for a fixed seed and a
// deterministic backend. noise_override replaces the seeded draw (tests use
// an all-zeros vector to get z == mu).
SynthesisRequest orchestrate(const StylePrompt& prompt, const std::string& synthesis_text,
                             const AnnotationDictionary& dict, const LatentBank& bank,
                             const Selector& selector, std::uint64_t seed,
                             DurationClamp clamp = {},
                             const std::optional<std::vector<double>>& noise_override = {});

struct DispatchReceipt {
    std::string job_id;
};

class SynthesisBackend {
public:
    virtual ~SynthesisBackend() = default;
    virtual DispatchReceipt dispatch(const SynthesisRequest& request) = 0;
    virtual std::string name() const = 0;
};

// POST {url}/synthesize, expects {"job_id": str} back.
class HttpSynthesisBackend : public SynthesisBackend {
public:
    explicit HttpSynthesisBackend(std::string url, double timeout_seconds = 30.0);
    DispatchReceipt dispatch(const SynthesisRequest& request) override;
    std::string name() const override { return "http:" + url_; }

private:
    std::string url_;
    double timeout_seconds_;
};

// Records requests in memory and hands out ids "stub-1", "stub-2", ...
class StubSynthesisBackend : public SynthesisBackend {
public:
    DispatchReceipt dispatch(const SynthesisRequest& request) override;
    std::string name() const override { return "stub"; }

    const std::vector<SynthesisRequest>& log() const { return log_; }

private:
    std::vector<SynthesisRequest> log_;
    std::uint64_t next_id_ = 1;
};

// Append-only newline-delimited JSON, one request per line. The single
// serialized resource of the gateway; appends are flushed before returning.
class RequestJournal {
public:
    explicit RequestJournal(std::filesystem::path path);

    void append(const SynthesisRequest& request);
    const std::filesystem::path& path() const { return path_; }

    static std::vector<SynthesisRequest> replay(const std::filesystem::path& path);

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::mutex mutex_;
};

// Journals the request, then hands it to the backend. The journal entry is
// written even when dispatch later fails.
DispatchReceipt dispatch(const SynthesisRequest& request, SynthesisBackend& backend,
                         RequestJournal& journal);

}  // namespace stylesel
