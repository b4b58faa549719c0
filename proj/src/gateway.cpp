#include "stylesel/gateway.hpp"

#include <chrono>

#include <httplib.h>

#include "stylesel/errors.hpp"
#include "stylesel/text.hpp"

namespace stylesel {

using nlohmann::json;

nlohmann::json synthesis_wire_payload(const SynthesisRequest& request) {
    json j;
    j["text"] = request.text;
    j["reference_id"] = request.reference_id;
    j["latent"] = request.latent;
    j["duration_scale"] = request.duration_scale;
    return j;
}

nlohmann::json synthesis_request_to_json(const SynthesisRequest& request) {
    json j = synthesis_wire_payload(request);
    j["retrieval"] = json{{"index", request.retrieval.index},
                          {"description", request.retrieval.description},
                          {"backend", request.retrieval.backend},
                          {"raw_output", request.retrieval.raw_output}};
    return j;
}

SynthesisRequest synthesis_request_from_json(const nlohmann::json& j) {
    SynthesisRequest request;
    try {
        request.text = j.at("text").get<std::string>();
        request.reference_id = j.at("reference_id").get<std::string>();
        request.latent = j.at("latent").get<std::vector<double>>();
        request.duration_scale = j.at("duration_scale").get<double>();
        const auto& r = j.at("retrieval");
        request.retrieval.index = r.at("index").get<int>();
        request.retrieval.description = r.at("description").get<std::string>();
        request.retrieval.backend = r.at("backend").get<std::string>();
        request.retrieval.raw_output = r.at("raw_output").get<std::string>();
    } catch (const json::exception& ex) {
        throw ValidationError(std::string("malformed synthesis request record: ") + ex.what());
    }
    return request;
}

SynthesisRequest orchestrate(const StylePrompt& prompt, const std::string& synthesis_text,
                             const AnnotationDictionary& dict, const LatentBank& bank,
                             const Selector& selector, std::uint64_t seed, DurationClamp clamp,
                             const std::optional<std::vector<double>>& noise_override) {
    if (dict.entries.empty()) {
        throw ValidationError("cannot orchestrate against an empty dictionary");
    }
    if (is_blank(synthesis_text)) {
        throw ValidationError("synthesis text is empty");
    }
    if (prompt.kind == PromptKind::StyleInference && prompt.text != synthesis_text) {
        throw ValidationError("style-inference prompts must carry the synthesis text itself");
    }

    RetrievalResult retrieval = selector.select(prompt, dict);
    const AnnotationEntry& entry = dict.at(retrieval.index);

    auto it = bank.specs.find(entry.reference_id);
    if (it == bank.specs.end()) {
        throw ValidationError("latent bank has no entry for reference_id '" + entry.reference_id +
                              "' (selected index " + std::to_string(retrieval.index) + ")");
    }
    const LatentSpec& spec = it->second;

    std::vector<double> noise;
    if (noise_override) {
        noise = *noise_override;
    } else {
        noise = sample_noise(spec.dim(), seed);
    }
    std::vector<double> z = reparameterize(spec, noise);

    double scale = 1.0;
    if (entry.mean_phone_duration && dict.corpus_mean_phone_duration) {
        scale = clamped_duration_scale(*entry.mean_phone_duration,
                                       *dict.corpus_mean_phone_duration, clamp);
    }

    SynthesisRequest request;
    request.text = synthesis_text;
    request.reference_id = entry.reference_id;
    request.latent = std::move(z);
    request.duration_scale = scale;
    request.retrieval = std::move(retrieval);
    return request;
}

HttpSynthesisBackend::HttpSynthesisBackend(std::string url, double timeout_seconds)
    : url_(std::move(url)), timeout_seconds_(timeout_seconds) {
    while (!url_.empty() && url_.back() == '/') url_.pop_back();
    if (url_.empty()) {
        throw ValidationError("synthesis backend URL is empty");
    }
}

DispatchReceipt HttpSynthesisBackend::dispatch(const SynthesisRequest& request) {
    auto scheme_end = url_.find("://");
    std::size_t host_begin = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_begin = url_.find('/', host_begin);
    std::string base = path_begin == std::string::npos ? url_ : url_.substr(0, path_begin);
    std::string prefix = path_begin == std::string::npos ? "" : url_.substr(path_begin);

    httplib::Client client(base);
    auto seconds = std::chrono::duration<double>(timeout_seconds_);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(seconds));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(seconds));

    std::string body = synthesis_wire_payload(request).dump();
    auto res = client.Post(prefix + "/synthesize", body, "application/json");
    if (!res) {
        throw TransportError("POST " + url_ + "/synthesize failed: " +
                             httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        throw TransportError("POST " + url_ + "/synthesize returned status " +
                             std::to_string(res->status) + ": " + res->body);
    }
    try {
        json parsed = json::parse(res->body);
        return DispatchReceipt{parsed.at("job_id").get<std::string>()};
    } catch (const json::exception& ex) {
        throw ResponseParseError(std::string("malformed synthesis response: ") + ex.what(),
                                 res->body);
    }
}

DispatchReceipt StubSynthesisBackend::dispatch(const SynthesisRequest& request) {
    log_.push_back(request);
    return DispatchReceipt{"stub-" + std::to_string(next_id_++)};
}

RequestJournal::RequestJournal(std::filesystem::path path) : path_(std::move(path)) {
    out_.open(path_, std::ios::app);
    if (!out_) {
        throw IoError("cannot open journal for appending: " + path_.string());
    }
}

void RequestJournal::append(const SynthesisRequest& request) {
    std::lock_guard<std::mutex> lock(mutex_);
    out_ << synthesis_request_to_json(request).dump() << '\n';
    out_.flush();
    if (!out_.good()) {
        throw IoError("journal write failed: " + path_.string());
    }
}

std::vector<SynthesisRequest> RequestJournal::replay(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read journal: " + path.string());
    }
    std::vector<SynthesisRequest> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        try {
            out.push_back(synthesis_request_from_json(json::parse(line)));
        } catch (const json::parse_error& ex) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " +
                                  ex.what());
        }
    }
    return out;
}

DispatchReceipt dispatch(const SynthesisRequest& request, SynthesisBackend& backend,
                         RequestJournal& journal) {
    journal.append(request);  // journal first; a failed dispatch stays auditable
    return backend.dispatch(request);
}

}  // namespace stylesel
