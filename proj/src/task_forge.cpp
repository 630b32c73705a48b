#include "toolforge/task_forge.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include "toolforge/artifact_io.hpp"
#include "toolforge/error.hpp"

namespace toolforge {

std::string_view to_string(Difficulty d) {
    switch (d) {
        case Difficulty::Easy: return "easy";
        case Difficulty::Medium: return "medium";
        case Difficulty::Hard: return "hard";
    }
    return "medium";
}

std::optional<Difficulty> difficulty_from_string(std::string_view s) {
    if (s == "easy") return Difficulty::Easy;
    if (s == "medium") return Difficulty::Medium;
    if (s == "hard") return Difficulty::Hard;
    return std::nullopt;
}

json serialize(const ValidationVerdict& v) {
    json doc{{"verifiable", v.verifiable},
             {"well_specified", v.well_specified},
             {"interpretable", v.interpretable},
             {"realism", v.realism},
             {"difficulty_calibrated", v.difficulty_calibrated},
             {"pass", v.pass()}};
    if (!v.notes.empty()) doc["notes"] = v.notes;
    return doc;
}

ValidationVerdict parse_validation_verdict(const json& doc) {
    ValidationVerdict v;
    v.verifiable = doc.value("verifiable", false);
    v.well_specified = doc.value("well_specified", false);
    v.interpretable = doc.value("interpretable", false);
    v.realism = doc.value("realism", 0);
    v.difficulty_calibrated = doc.value("difficulty_calibrated", false);
    v.notes = doc.value("notes", "");
    return v;
}

std::vector<std::string> TaskRecord::schema_keys() const {
    std::vector<std::string> keys;
    if (answer_schema.is_object()) {
        for (const auto& [k, _] : answer_schema.items()) keys.push_back(k);
    }
    return keys;
}

namespace {

json serialize_operand(const Operand& op) {
    if (op.field) return json{{"field", *op.field}};
    json doc{{"node", op.node}, {"path", op.path}};
    if (!op.transform.empty()) doc["transform"] = op.transform;
    return doc;
}

Operand parse_operand(const json& doc) {
    if (!doc.is_object()) throw Error(ErrorCode::MalformedArtifact, "operand is not an object");
    Operand op;
    if (auto it = doc.find("field"); it != doc.end()) {
        op.field = it->get<std::string>();
        return op;
    }
    op.node = doc.at("node").get<int>();
    op.path = doc.value("path", "");
    op.transform = doc.value("transform", "");
    return op;
}

json serialize_source(const FieldSource& src) {
    if (src.extract) return serialize_operand(*src.extract);
    json inputs = json::array();
    for (const auto& i : src.inputs) inputs.push_back(serialize_operand(i));
    json doc{{"derive", src.derive}, {"inputs", inputs}};
    if (!src.labels.empty()) {
        json labels = json::array();
        for (const auto& l : src.labels) labels.push_back(serialize_operand(l));
        doc["labels"] = labels;
    }
    return doc;
}

FieldSource parse_source(const json& doc) {
    FieldSource src;
    if (!doc.is_object()) throw Error(ErrorCode::MalformedArtifact, "field source is not an object");
    if (auto it = doc.find("derive"); it != doc.end()) {
        src.derive = it->get<std::string>();
        for (const auto& i : doc.value("inputs", json::array())) src.inputs.push_back(parse_operand(i));
        for (const auto& l : doc.value("labels", json::array())) src.labels.push_back(parse_operand(l));
    } else {
        src.extract = parse_operand(doc);
    }
    return src;
}

std::string value_text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_null()) return "null";
    return canonical_dump(v);
}

std::string number_text(double x) {
    if (std::trunc(x) == x && std::fabs(x) < 9007199254740992.0) return std::to_string(static_cast<long long>(x));
    return format_double(x);
}

double parse_number(const std::string& text, const std::string& what) {
    double x = 0.0;
    const char* begin = text.data();
    const char* end = text.data() + text.size();
    while (begin < end && *begin == ' ') ++begin;
    auto [ptr, ec] = std::from_chars(begin, end, x);
    if (ec != std::errc() || ptr != end) throw Error(ErrorCode::ExtractionFailed, what + ": '" + text + "' is not a number");
    return x;
}

class Extractor {
public:
    Extractor(const std::vector<AnswerField>& fields, const std::vector<int>& selected, const CallDag& dag)
        : fields_(fields), selected_(selected.begin(), selected.end()), dag_(dag) {}

    std::string field(const std::string& name, int depth = 0) {
        if (auto it = memo_.find(name); it != memo_.end()) return it->second;
        if (depth > static_cast<int>(fields_.size())) throw Error(ErrorCode::ExtractionFailed, "cyclic field reference at '" + name + "'");
        const AnswerField* f = nullptr;
        for (const auto& candidate : fields_) {
            if (candidate.name == name) f = &candidate;
        }
        if (f == nullptr) throw Error(ErrorCode::ExtractionFailed, "unknown field '" + name + "'");
        std::string value = f->source.extract ? operand(*f->source.extract, depth) : derive(*f, depth);
        memo_[name] = value;
        return value;
    }

private:
    std::string operand(const Operand& op, int depth) {
        if (op.field) return field(*op.field, depth + 1);
        if (!selected_.count(op.node)) {
            throw Error(ErrorCode::ExtractionFailed, "node " + std::to_string(op.node) + " is not among the selected nodes");
        }
        const CallNode* node = dag_.node(op.node);
        if (node == nullptr) throw Error(ErrorCode::ExtractionFailed, "node " + std::to_string(op.node) + " is absent from " + dag_.dag_id);
        if (!node->ok()) throw Error(ErrorCode::ExtractionFailed, "node " + std::to_string(op.node) + " has no output");
        const json* at = nullptr;
        try {
            at = &node->output->value().at(json::json_pointer(op.path));
        } catch (const json::exception&) {
            throw Error(ErrorCode::ExtractionFailed, "path '" + op.path + "' missing in output of node " + std::to_string(op.node));
        }
        return apply_transform(*at, op.transform, op.path);
    }

    static std::string apply_transform(const json& v, const std::string& transform, const std::string& path) {
        if (transform.empty()) return value_text(v);
        if (transform == "length") {
            if (v.is_array() || v.is_object()) return std::to_string(v.size());
            if (v.is_string()) return std::to_string(v.get_ref<const std::string&>().size());
            throw Error(ErrorCode::ExtractionFailed, "length of a scalar at '" + path + "'");
        }
        std::string text = value_text(v);
        if (transform == "year") {
            static const std::regex year_re(R"((^|[^0-9])([0-9]{4})([^0-9]|$))");
            std::smatch m;
            if (!std::regex_search(text, m, year_re)) throw Error(ErrorCode::ExtractionFailed, "no year in '" + text + "'");
            return m[2].str();
        }
        if (transform == "lower" || transform == "upper") {
            for (auto& c : text) c = static_cast<char>(transform == "lower" ? std::tolower(static_cast<unsigned char>(c))
                                                                            : std::toupper(static_cast<unsigned char>(c)));
            return text;
        }
        throw Error(ErrorCode::ExtractionFailed, "unknown transform '" + transform + "'");
    }

    std::string derive(const AnswerField& f, int depth) {
        const auto& src = f.source;
        std::vector<double> nums;
        for (const auto& in : src.inputs) nums.push_back(parse_number(operand(in, depth), f.name));
        auto need = [&](size_t n) {
            if (nums.size() != n) {
                throw Error(ErrorCode::ExtractionFailed, src.derive + " needs " + std::to_string(n) + " inputs for '" + f.name + "'");
            }
        };
        auto need_some = [&] {
            if (nums.empty()) throw Error(ErrorCode::ExtractionFailed, src.derive + " needs inputs for '" + f.name + "'");
        };
        if (src.derive == "abs_diff") {
            need(2);
            return number_text(std::fabs(nums[0] - nums[1]));
        }
        if (src.derive == "difference") {
            need(2);
            return number_text(nums[0] - nums[1]);
        }
        if (src.derive == "sum") {
            double s = 0.0;
            for (double x : nums) s += x;
            return number_text(s);
        }
        if (src.derive == "min" || src.derive == "max") {
            need_some();
            auto it = src.derive == "min" ? std::min_element(nums.begin(), nums.end()) : std::max_element(nums.begin(), nums.end());
            return number_text(*it);
        }
        if (src.derive == "argmin" || src.derive == "argmax") {
            need_some();
            if (src.labels.size() != nums.size()) throw Error(ErrorCode::ExtractionFailed, src.derive + " needs one label per input");
            // first index wins ties
            auto it = src.derive == "argmin" ? std::min_element(nums.begin(), nums.end()) : std::max_element(nums.begin(), nums.end());
            return operand(src.labels[static_cast<size_t>(it - nums.begin())], depth);
        }
        throw Error(ErrorCode::ExtractionFailed, "unknown derivation '" + src.derive + "'");
    }

    const std::vector<AnswerField>& fields_;
    std::set<int> selected_;
    const CallDag& dag_;
    std::map<std::string, std::string> memo_;
};

std::string render_dag(const CallDag& dag) {
    std::ostringstream os;
    for (const auto& n : dag.nodes) {
        os << "#" << n.node_id << " " << n.tool.str() << " args=" << n.args.dump();
        if (n.output) os << " output=" << n.output->dump();
        else os << " error=" << canonical_dump(n.error);
        std::vector<int> parents;
        for (const auto& [p, c] : dag.edges) {
            if (c == n.node_id) parents.push_back(p);
        }
        if (!parents.empty()) {
            os << " parents=";
            for (size_t i = 0; i < parents.size(); ++i) os << (i ? "," : "") << parents[i];
        }
        os << "\n";
    }
    return os.str();
}

std::string render_trajectory(const TaskRecord& t, const CallDag& dag) {
    std::ostringstream os;
    for (int id : t.gt_trajectory) {
        const CallNode* n = dag.node(id);
        if (n == nullptr) continue;
        os << "#" << n->node_id << " " << n->tool.str() << " args=" << n->args.dump();
        if (n->output) os << " output=" << n->output->dump();
        os << "\n";
    }
    return os.str();
}

}  // namespace

json serialize(const TaskRecord& t) {
    json fields = json::array();
    for (const auto& f : t.fields) fields.push_back({{"name", f.name}, {"source", serialize_source(f.source)}});
    json doc{{"task_id", t.task_id},
             {"source_dag", t.source_dag},
             {"prompt", t.prompt},
             {"answer_schema", t.answer_schema},
             {"answer_template", t.answer_template},
             {"difficulty", t.difficulty},
             {"selected_nodes", t.selected_nodes},
             {"gt_trajectory", t.gt_trajectory},
             {"fields", fields},
             {"ground_truth", t.ground_truth.value()}};
    if (t.verdict) doc["verdict"] = serialize(*t.verdict);
    return doc;
}

TaskRecord parse_task(const json& doc) {
    try {
        TaskRecord t;
        t.task_id = doc.at("task_id").get<std::string>();
        t.source_dag = doc.value("source_dag", "");
        t.prompt = doc.value("prompt", "");
        t.answer_schema = doc.value("answer_schema", json::object());
        t.answer_template = doc.value("answer_template", "");
        t.difficulty = doc.value("difficulty", "");
        t.selected_nodes = doc.value("selected_nodes", std::vector<int>{});
        t.gt_trajectory = doc.value("gt_trajectory", t.selected_nodes);
        for (const auto& f : doc.value("fields", json::array())) t.fields.push_back({f.at("name").get<std::string>(), parse_source(f.at("source"))});
        t.ground_truth = canonicalize(doc.value("ground_truth", json::object()));
        if (auto it = doc.find("verdict"); it != doc.end() && it->is_object()) t.verdict = parse_validation_verdict(*it);
        return t;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedArtifact, std::string("bad task document: ") + e.what());
    }
}

std::vector<std::string> placeholders(std::string_view text) {
    static const std::regex re(R"(\{([A-Za-z_][A-Za-z0-9_]*)\})");
    std::vector<std::string> out;
    std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) out.push_back((*it)[1].str());
    return out;
}

PrecheckReport structural_precheck(const TaskRecord& t) {
    PrecheckReport r;
    auto trimmed_empty = [](const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; };
    if (trimmed_empty(t.prompt)) r.violations.push_back("empty prompt");
    if (!difficulty_from_string(t.difficulty)) r.violations.push_back("difficulty '" + t.difficulty + "' is not easy|medium|hard");
    if (t.selected_nodes.empty()) r.violations.push_back("no selected nodes");

    std::set<std::string> schema_slots;
    std::set<std::string> keys;
    if (!t.answer_schema.is_object() || t.answer_schema.empty()) {
        r.violations.push_back("answer_schema must be a non-empty object");
    } else {
        for (const auto& [k, v] : t.answer_schema.items()) {
            keys.insert(k);
            if (!v.is_string()) {
                r.violations.push_back("answer_schema field '" + k + "' is not a string placeholder (schema must be flat)");
                continue;
            }
            for (auto& p : placeholders(v.get<std::string>())) schema_slots.insert(p);
        }
    }
    if (keys != schema_slots) r.violations.push_back("answer_schema keys and their placeholders differ");
    std::set<std::string> template_slots;
    for (auto& p : placeholders(t.answer_template)) template_slots.insert(p);
    for (const auto& p : template_slots) {
        if (!schema_slots.count(p)) r.violations.push_back("template placeholder {" + p + "} missing from answer_schema");
    }
    for (const auto& p : schema_slots) {
        if (!template_slots.count(p)) r.violations.push_back("schema placeholder {" + p + "} missing from answer_template");
    }
    if (t.ground_truth.value().is_object()) {
        std::set<std::string> truth_keys;
        for (const auto& [k, _] : t.ground_truth.value().items()) truth_keys.insert(k);
        if (truth_keys != keys) r.violations.push_back("ground_truth keys differ from answer_schema keys");
    } else {
        r.violations.push_back("ground_truth is not an object");
    }
    return r;
}

CanonicalValue extract_answer(const std::vector<AnswerField>& fields, const std::vector<int>& selected_nodes, const CallDag& dag) {
    Extractor ex(fields, selected_nodes, dag);
    json out = json::object();
    for (const auto& f : fields) out[f.name] = ex.field(f.name);
    return canonicalize(out);
}

CanonicalValue bind_answer(const TaskRecord& t, const CallDag& dag) {
    for (int id : t.selected_nodes) {
        if (dag.node(id) == nullptr) throw Error(ErrorCode::ExtractionFailed, "selected node " + std::to_string(id) + " is absent from " + dag.dag_id);
    }
    CanonicalValue bound = extract_answer(t.fields, t.selected_nodes, dag);
    if (!(bound == t.ground_truth)) {
        throw Error(ErrorCode::Mismatch, t.task_id + ": re-extracted " + bound.dump() + " != stored " + t.ground_truth.dump());
    }
    return bound;
}

std::vector<TaskRecord> synthesize_tasks(const CallDag& dag, JudgeGateway& gateway, int variants, std::vector<SynthesisRejection>* rejected) {
    if (std::none_of(dag.nodes.begin(), dag.nodes.end(), [](const CallNode& n) { return n.ok(); })) {
        throw Error(ErrorCode::NoUsableNodes, dag.dag_id + " has no successful tool outputs");
    }
    auto reject = [&](int variant, std::string reason) {
        if (rejected) rejected->push_back({variant, std::move(reason)});
    };

    std::vector<TaskRecord> out;
    std::string previous;
    for (int v = 1; v <= variants; ++v) {
        std::string prompt = gateway.prompts().render(JudgeRole::TaskSynthesizer, {{"dag_id", dag.dag_id},
                                                                                  {"start", dag.start_tool.str()},
                                                                                  {"nodes", render_dag(dag)},
                                                                                  {"variant", std::to_string(v)},
                                                                                  {"variants", std::to_string(variants)},
                                                                                  {"previous", previous.empty() ? "(none)\n" : previous}});
        json resp = gateway.complete(JudgeRequest::make(JudgeRole::TaskSynthesizer, prompt)).value.value();

        TaskRecord t;
        t.task_id = dag.dag_id + "-t" + std::to_string(v);
        t.source_dag = dag.dag_id;
        t.prompt = resp.at("prompt").get<std::string>();
        t.difficulty = resp.at("difficulty").get<std::string>();
        t.answer_template = resp.at("answer_template").get<std::string>();
        t.selected_nodes = resp.at("selected_nodes").get<std::vector<int>>();
        std::sort(t.selected_nodes.begin(), t.selected_nodes.end());
        t.selected_nodes.erase(std::unique(t.selected_nodes.begin(), t.selected_nodes.end()), t.selected_nodes.end());

        bool bad = false;
        json claimed = json::object();
        for (const auto& f : resp.at("fields")) {
            AnswerField field;
            field.name = f.at("name").get<std::string>();
            try {
                field.source = parse_source(f.at("source"));
            } catch (const std::exception& e) {
                reject(v, "field '" + field.name + "' has an unusable source: " + e.what());
                bad = true;
                break;
            }
            if (f.contains("value")) claimed[field.name] = f["value"];
            t.answer_schema[field.name] = "{" + field.name + "}";
            t.fields.push_back(std::move(field));
        }
        if (bad) continue;
        for (int id : t.selected_nodes) {
            const CallNode* n = dag.node(id);
            if (n == nullptr || !n->ok()) {
                reject(v, "selected node " + std::to_string(id) + " is missing or failed");
                bad = true;
                break;
            }
        }
        if (bad) continue;
        try {
            t.ground_truth = extract_answer(t.fields, t.selected_nodes, dag);
        } catch (const Error& e) {
            reject(v, e.what());
            continue;
        }
        for (const auto& [name, value] : claimed.items()) {
            if (t.ground_truth.value().value(name, json()) != canonicalize(value).value()) {
                reject(v, "claimed value for '" + name + "' disagrees with the observed output");
                bad = true;
                break;
            }
        }
        if (bad) continue;
        t.gt_trajectory = dag.ancestor_closure(t.selected_nodes);
        if (auto report = structural_precheck(t); !report.ok()) {
            reject(v, report.violations.front());
            continue;
        }
        if (std::any_of(out.begin(), out.end(), [&](const TaskRecord& o) { return o.prompt == t.prompt; })) {
            reject(v, "duplicate of an earlier variant");
            continue;
        }
        previous += "- " + t.prompt + "\n";
        out.push_back(std::move(t));
    }
    return out;
}

ValidationVerdict validate_task(const TaskRecord& t, const CallDag& dag, JudgeGateway& gateway) {
    if (auto report = structural_precheck(t); !report.ok()) {
        throw Error(ErrorCode::PreconditionFailed, t.task_id + " fails precheck: " + report.violations.front());
    }
    try {
        bind_answer(t, dag);
    } catch (const Error& e) {
        throw Error(ErrorCode::PreconditionFailed, t.task_id + " does not bind: " + e.detail());
    }
    std::string prompt = gateway.prompts().render(JudgeRole::TaskValidator, {{"task_id", t.task_id},
                                                                            {"prompt", t.prompt},
                                                                            {"difficulty", t.difficulty},
                                                                            {"answer_schema", canonical_dump(t.answer_schema)},
                                                                            {"answer_template", t.answer_template},
                                                                            {"ground_truth", t.ground_truth.dump()},
                                                                            {"call_count", std::to_string(t.gt_trajectory.size())},
                                                                            {"trajectory", render_trajectory(t, dag)}});
    auto resp = gateway.complete(JudgeRequest::make(JudgeRole::TaskValidator, prompt));
    return parse_validation_verdict(resp.value.value());
}

void write_tasks(const std::filesystem::path& path, const std::vector<TaskRecord>& tasks, const json& funnel) {
    json header = make_header(kTasksFormat, 1);
    header["funnel"] = funnel;
    std::vector<json> lines;
    for (const auto& t : tasks) lines.push_back(serialize(t));
    write_jsonl(path, header, lines);
}

std::vector<TaskRecord> read_tasks(const std::filesystem::path& path) {
    auto doc = read_jsonl(path);
    expect_format(doc, kTasksFormat, path);
    std::vector<TaskRecord> out;
    for (const auto& rec : doc.records) out.push_back(parse_task(rec));
    return out;
}

}  // namespace toolforge
