// stylesel - retrieval-driven style control front end for expressive TTS.
//
// Subcommands:
//   select  match an explicit style description, then emit a synthesis request
//   infer   infer the style from the synthesis text itself
//   ablate  hit-rate grid over backends and annotation counts
//
// Configuration precedence: flags > --config file > built-in defaults.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stylesel/annotation.hpp"
#include "stylesel/errors.hpp"
#include "stylesel/eval.hpp"
#include "stylesel/gateway.hpp"
#include "stylesel/latent.hpp"
#include "stylesel/selector.hpp"
#include "stylesel/text.hpp"

using nlohmann::json;
using namespace stylesel;

namespace {

struct Options {
    std::string config_path;
    std::string dict_path;
    std::string latents_path;
    std::string backend = "mock";
    std::vector<std::string> ablate_backends;
    std::string endpoint;
    std::string model;
    std::string mock_mapping_path;
    std::string embeddings_path;
    std::uint64_t seed = 0;
    bool stub = false;
    std::string journal_path = "requests.jsonl";
    std::string synth_url;
    std::string cases_path;
    std::vector<std::size_t> counts = {50, 100, 150, 200, 250};
    std::string out_path;
    double timeout_seconds = 30.0;
    int max_retries = 2;
    double temperature = 0.0;
    double clamp_lo = 0.25;
    double clamp_hi = 4.0;
    std::size_t group_size = 20;
    std::size_t parallelism = 4;
    std::string style;
    std::string text;
    json prompt_template = json::object();  // config-file only
};

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("config file not found: " + path);
    }
    try {
        json j = json::parse(in);
        if (!j.is_object()) {
            throw ValidationError(path + ": config must be a JSON object");
        }
        return j;
    } catch (const json::parse_error& ex) {
        throw ValidationError(path + ": " + ex.what());
    }
}

// file value wins over the built-in default; a flag the user typed wins over both
template <typename T>
void overlay(const CLI::App* cmd, const std::string& flag, const json& file, const char* key,
             T& value) {
    const CLI::Option* option = cmd->get_option_no_throw(flag);
    if (option != nullptr && option->count() > 0) return;
    if (file.contains(key)) {
        try {
            value = file.at(key).get<T>();
        } catch (const json::exception& ex) {
            throw ValidationError(std::string("config key '") + key + "': " + ex.what());
        }
    }
}

void apply_config_file(const CLI::App* cmd, Options& opt) {
    json file = load_config_file(opt.config_path);
    overlay(cmd, "--dict", file, "dict", opt.dict_path);
    overlay(cmd, "--latents", file, "latents", opt.latents_path);
    overlay(cmd, "--backend", file, "backend", opt.backend);
    overlay(cmd, "--endpoint", file, "endpoint", opt.endpoint);
    overlay(cmd, "--model", file, "model", opt.model);
    overlay(cmd, "--mock-mapping", file, "mock_mapping", opt.mock_mapping_path);
    overlay(cmd, "--embeddings", file, "embeddings", opt.embeddings_path);
    overlay(cmd, "--seed", file, "seed", opt.seed);
    overlay(cmd, "--stub", file, "stub", opt.stub);
    overlay(cmd, "--journal", file, "journal", opt.journal_path);
    overlay(cmd, "--synth-url", file, "synth_url", opt.synth_url);
    overlay(cmd, "--timeout", file, "timeout_seconds", opt.timeout_seconds);
    overlay(cmd, "--max-retries", file, "max_retries", opt.max_retries);
    overlay(cmd, "--temperature", file, "temperature", opt.temperature);
    overlay(cmd, "--clamp-lo", file, "clamp_lo", opt.clamp_lo);
    overlay(cmd, "--clamp-hi", file, "clamp_hi", opt.clamp_hi);
    overlay(cmd, "--group-size", file, "group_size", opt.group_size);
    overlay(cmd, "--parallelism", file, "parallelism", opt.parallelism);
    if (file.contains("prompt_template")) {
        opt.prompt_template = file.at("prompt_template");
    }
    if (cmd->get_option_no_throw("--cases") != nullptr) {
        overlay(cmd, "--cases", file, "cases", opt.cases_path);
        overlay(cmd, "--counts", file, "counts", opt.counts);
        if (cmd->count("--backend") == 0 && file.contains("backends")) {
            opt.ablate_backends = file.at("backends").get<std::vector<std::string>>();
        }
    }
}

std::map<std::string, int> load_mock_mapping(const std::string& path) {
    if (path.empty()) return {};
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("mock mapping file not found: " + path);
    }
    try {
        json j = json::parse(in);
        std::map<std::string, int> mapping;
        for (const auto& [text, index] : j.items()) {
            mapping.emplace(text, index.get<int>());
        }
        return mapping;
    } catch (const json::parse_error& ex) {
        throw ValidationError(path + ": " + ex.what());
    }
}

SelectorConfig build_selector_config(const Options& opt, const std::string& backend) {
    SelectorConfig config;
    if (backend == "mock") {
        config.backend_kind = BackendKind::Mock;
    } else if (backend == "cosine") {
        config.backend_kind = BackendKind::EmbeddingCosine;
    } else if (backend == "llm") {
        config.backend_kind = BackendKind::LlmChat;
    } else {
        throw ValidationError("unknown backend '" + backend + "' (expected llm, cosine or mock)");
    }
    config.model_name = opt.model;
    config.endpoint = opt.endpoint;
    config.max_retries = opt.max_retries;
    config.timeout_seconds = opt.timeout_seconds;
    config.temperature = opt.temperature;
    config.offline_embeddings_path = opt.embeddings_path;
    config.mock_mapping = load_mock_mapping(opt.mock_mapping_path);
    if (opt.prompt_template.is_object() && !opt.prompt_template.empty()) {
        try {
            auto& t = config.prompt_template;
            const json& j = opt.prompt_template;
            if (j.contains("selection_instruction"))
                t.selection_instruction = j.at("selection_instruction").get<std::string>();
            if (j.contains("inference_instruction"))
                t.inference_instruction = j.at("inference_instruction").get<std::string>();
            if (j.contains("answer_directive"))
                t.answer_directive = j.at("answer_directive").get<std::string>();
        } catch (const json::exception& ex) {
            throw ValidationError(std::string("config key 'prompt_template': ") + ex.what());
        }
    }
    validate_selector_config(config);
    return config;
}

json effective_config_json(const Options& opt, const std::vector<std::string>& backends) {
    json j;
    j["dict"] = opt.dict_path;
    j["latents"] = opt.latents_path;
    j["backends"] = backends;
    j["endpoint"] = opt.endpoint;
    j["model"] = opt.model;
    j["mock_mapping"] = opt.mock_mapping_path;
    j["embeddings"] = opt.embeddings_path;
    j["seed"] = opt.seed;
    j["stub"] = opt.stub;
    j["journal"] = opt.journal_path;
    j["synth_url"] = opt.synth_url;
    j["timeout_seconds"] = opt.timeout_seconds;
    j["max_retries"] = opt.max_retries;
    j["temperature"] = opt.temperature;
    j["clamp"] = json::array({opt.clamp_lo, opt.clamp_hi});
    j["group_size"] = opt.group_size;
    j["parallelism"] = opt.parallelism;
    j["cases"] = opt.cases_path;
    j["counts"] = opt.counts;
    return j;
}

int run_request_command(const Options& opt, const StylePrompt& prompt,
                        const std::string& synthesis_text) {
    if (is_blank(prompt.text)) {
        throw ValidationError(prompt.kind == PromptKind::StyleSelection
                                  ? "--style must not be empty"
                                  : "--text must not be empty");
    }
    if (is_blank(synthesis_text)) {
        throw ValidationError("--text must not be empty");
    }
    if (opt.dict_path.empty()) throw ValidationError("no dictionary given (--dict)");
    if (opt.latents_path.empty()) throw ValidationError("no latent bank given (--latents)");

    AnnotationDictionary dict = load_dictionary(opt.dict_path);
    LatentBank bank = load_latent_bank(opt.latents_path);
    Selector selector(build_selector_config(opt, opt.backend));
    DurationClamp clamp{opt.clamp_lo, opt.clamp_hi};

    SynthesisRequest request =
        orchestrate(prompt, synthesis_text, dict, bank, selector, opt.seed, clamp);

    RequestJournal journal(opt.journal_path);
    std::unique_ptr<SynthesisBackend> backend;
    if (!opt.stub && !opt.synth_url.empty()) {
        backend = std::make_unique<HttpSynthesisBackend>(opt.synth_url, opt.timeout_seconds);
    } else {
        backend = std::make_unique<StubSynthesisBackend>();
    }
    DispatchReceipt receipt = dispatch(request, *backend, journal);

    std::cout << "index: " << request.retrieval.index << '\n'
              << "description: " << request.retrieval.description << '\n'
              << "backend: " << request.retrieval.backend << '\n'
              << "raw_output: " << request.retrieval.raw_output << '\n'
              << "reference_id: " << request.reference_id << '\n'
              << "duration_scale: " << request.duration_scale << '\n'
              << "latent: " << json(request.latent).dump() << '\n'
              << "job_id: " << receipt.job_id << '\n'
              << "journal: " << opt.journal_path << '\n';

    if (!opt.out_path.empty()) {
        json out;
        out["request"] = synthesis_request_to_json(request);
        out["job_id"] = receipt.job_id;
        out["config"] = effective_config_json(opt, {opt.backend});
        std::ofstream f(opt.out_path);
        if (!f) throw IoError("cannot open for writing: " + opt.out_path);
        f << out.dump(2) << '\n';
    }
    return 0;
}

int run_ablate_command(const Options& opt) {
    if (opt.dict_path.empty()) throw ValidationError("no dictionary given (--dict)");
    if (opt.cases_path.empty()) throw ValidationError("no cases file given (--cases)");

    AnnotationDictionary dict = load_dictionary(opt.dict_path);
    std::vector<AblationCase> cases = load_cases(opt.cases_path);

    std::vector<std::string> backend_names =
        opt.ablate_backends.empty() ? std::vector<std::string>{opt.backend} : opt.ablate_backends;
    std::vector<SelectorConfig> backends;
    backends.reserve(backend_names.size());
    for (const auto& name : backend_names) {
        backends.push_back(build_selector_config(opt, name));
    }

    AblationOptions options;
    options.seed = opt.seed;
    options.group_size = opt.group_size;
    options.parallelism = opt.parallelism;

    HitRateReport report = run_ablation(cases, dict, opt.counts, backends, options);

    std::cout << report_to_table(report);

    if (!opt.out_path.empty()) {
        json j = report_to_json(report);
        j["config"] = effective_config_json(opt, backend_names);
        std::ofstream jf(opt.out_path + ".json");
        if (!jf) throw IoError("cannot open for writing: " + opt.out_path + ".json");
        jf << j.dump(2) << '\n';
        std::ofstream cf(opt.out_path + ".csv");
        if (!cf) throw IoError("cannot open for writing: " + opt.out_path + ".csv");
        cf << report_to_csv(report);
        std::cout << "wrote " << opt.out_path << ".json and " << opt.out_path << ".csv\n";
    }
    return 0;
}

void add_common_options(CLI::App* cmd, Options& opt) {
    cmd->add_option("--config", opt.config_path, "JSON config file; flags override it");
    cmd->add_option("--dict", opt.dict_path, "annotation dictionary JSON file");
    cmd->add_option("--latents", opt.latents_path, "latent bank JSON file");
    cmd->add_option("--endpoint", opt.endpoint, "base URL of the chat/embedding API");
    cmd->add_option("--model", opt.model, "model name for the remote backend");
    cmd->add_option("--mock-mapping", opt.mock_mapping_path, "JSON file mapping text to index");
    cmd->add_option("--embeddings", opt.embeddings_path, "offline embedding JSON file");
    cmd->add_option("--seed", opt.seed, "seed for sampling and subsets");
    cmd->add_flag("--stub", opt.stub, "record requests instead of calling a synthesis backend");
    cmd->add_option("--journal", opt.journal_path, "request journal path (NDJSON, append-only)");
    cmd->add_option("--synth-url", opt.synth_url, "synthesis backend base URL");
    cmd->add_option("--timeout", opt.timeout_seconds, "request timeout in seconds");
    cmd->add_option("--max-retries", opt.max_retries, "extra attempts after the first");
    cmd->add_option("--temperature", opt.temperature, "chat sampling temperature");
    cmd->add_option("--clamp-lo", opt.clamp_lo, "duration scale lower clamp");
    cmd->add_option("--clamp-hi", opt.clamp_hi, "duration scale upper clamp");
    cmd->add_option("--out", opt.out_path, "write results to this path (prefix for ablate)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"retrieval-driven style control front end for expressive TTS"};
    app.require_subcommand(1);

    Options opt;

    CLI::App* select_cmd =
        app.add_subcommand("select", "match an explicit style description and emit a request");
    select_cmd->add_option("--style", opt.style, "natural-language style description")->required();
    select_cmd->add_option("--text", opt.text, "sentence to synthesize")->required();
    select_cmd->add_option("--backend", opt.backend, "llm, cosine or mock");
    add_common_options(select_cmd, opt);

    CLI::App* infer_cmd =
        app.add_subcommand("infer", "infer the style from the synthesis text and emit a request");
    infer_cmd->add_option("--text", opt.text, "sentence to synthesize")->required();
    infer_cmd->add_option("--backend", opt.backend, "llm, cosine or mock");
    add_common_options(infer_cmd, opt);

    CLI::App* ablate_cmd =
        app.add_subcommand("ablate", "hit-rate grid over backends and annotation counts");
    ablate_cmd->add_option("--cases", opt.cases_path, "ablation cases JSON file");
    ablate_cmd->add_option("--counts", opt.counts, "annotation counts")->delimiter(',');
    ablate_cmd->add_option("--backend", opt.ablate_backends, "backend (repeatable)");
    ablate_cmd->add_option("--group-size", opt.group_size, "questionnaire group size");
    ablate_cmd->add_option("--parallelism", opt.parallelism, "concurrent selections per cell");
    add_common_options(ablate_cmd, opt);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    }

    try {
        CLI::App* cmd = app.get_subcommands().front();
        apply_config_file(cmd, opt);
        if (cmd == select_cmd) {
            return run_request_command(opt, {PromptKind::StyleSelection, opt.style}, opt.text);
        }
        if (cmd == infer_cmd) {
            return run_request_command(opt, {PromptKind::StyleInference, opt.text}, opt.text);
        }
        return run_ablate_command(opt);
    } catch (const ValidationError& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
}
