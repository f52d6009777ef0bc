// SPDX-License-Identifier: Apache-2.0
#include "toolr1/tools.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace toolr1 {

const char* to_string(ToolErrorKind kind) {
  switch (kind) {
    case ToolErrorKind::UnknownTool: return "UnknownTool";
    case ToolErrorKind::MissingArgument: return "MissingArgument";
    case ToolErrorKind::InvalidArgument: return "InvalidArgument";
    case ToolErrorKind::BackendTimeout: return "BackendTimeout";
    case ToolErrorKind::BackendFailure: return "BackendFailure";
    case ToolErrorKind::Terminated: return "Terminated";
  }
  return "ToolError";
}

std::string ToolError::describe() const { return fmt::format("{}: {}", to_string(kind), message); }

std::vector<ToolSpec> canonical_tool_specs() {
  const auto str = ParamType::String;
  return {
      {"inspect_file_as_text",
       "Reads a local file (office documents, PDF, audio, HTML or plain text) as markdown and answers a "
       "question about its contents.",
       {{"file_path", str, true, "Path of the file to read."},
        {"question", str, false, "What to extract from the file; omit to get the whole text."}},
       str},
      {"wikipedia_qa",
       "Looks a topic up on Wikipedia and answers a question using only the relevant parts of the article.",
       {{"query", str, true, "Topic to search for."}, {"question", str, true, "Question to answer from the page."}},
       str},
      {"web_qa",
       "Runs a web search and answers a question from the retrieved results.",
       {{"query", str, true, "Search query."}, {"question", str, true, "Question to answer from the results."}},
       str},
      {"visit_qa",
       "Opens a given URL (YouTube links yield the transcript) and answers a question about the page.",
       {{"url", str, true, "Address of the page."}, {"question", str, true, "Question to answer from the page."}},
       str},
      {"find_archived_url",
       "Finds the Wayback Machine snapshot of a URL closest to a date.",
       {{"url", str, true, "Address to look up."}, {"date", str, true, "Target date as YYYYMMDD."}},
       str},
      {"local_visualizer",
       "Answers a question about a local image file: objects, scene, visible text.",
       {{"image_path", str, true, "Path of the image."}, {"question", str, true, "Question about the image."}},
       str},
      {"final_answer",
       "Ends the task: formally submits the final solution to the problem. Any value type is accepted.",
       {{"answer", ParamType::Any, true, "The final answer."}},
       ParamType::Any},
  };
}

ToolRegistry::ToolRegistry(std::vector<ToolSpec> specs, std::shared_ptr<ToolBackend> backend)
    : specs_(std::move(specs)), backend_(std::move(backend)) {
  for (std::size_t i = 0; i < specs_.size(); ++i)
    for (std::size_t j = i + 1; j < specs_.size(); ++j)
      if (specs_[i].name == specs_[j].name) throw std::invalid_argument("duplicate tool name: " + specs_[i].name);
}

ToolRegistry ToolRegistry::canonical(std::shared_ptr<ToolBackend> backend) {
  return ToolRegistry(canonical_tool_specs(), std::move(backend));
}

const ToolSpec* ToolRegistry::find(std::string_view name) const {
  for (const auto& s : specs_)
    if (s.name == name) return &s;
  return nullptr;
}

ToolReply ToolRegistry::invoke(const std::string& name, const Kwargs& kwargs, const CallContext& ctx) const {
  const ToolSpec* spec = find(name);
  if (!spec) return ToolError{ToolErrorKind::UnknownTool, fmt::format("'{}' is not a registered tool", name)};

  for (std::size_t i = 0; i < kwargs.size(); ++i) {
    const auto& [key, value] = kwargs[i];
    for (std::size_t j = 0; j < i; ++j)
      if (kwargs[j].first == key)
        return ToolError{ToolErrorKind::InvalidArgument, fmt::format("{}() got multiple values for '{}'", name, key)};
    auto param = std::find_if(spec->inputs.begin(), spec->inputs.end(), [&](const ToolParam& p) { return p.name == key; });
    if (param == spec->inputs.end())
      return ToolError{ToolErrorKind::InvalidArgument, fmt::format("{}() got an unexpected argument '{}'", name, key)};
    if (param->type == ParamType::String && !value.is_str())
      return ToolError{ToolErrorKind::InvalidArgument,
                       fmt::format("{}() argument '{}' must be a string, not {}", name, key, value.type_name())};
  }
  for (const auto& param : spec->inputs) {
    if (!param.required) continue;
    bool present = std::any_of(kwargs.begin(), kwargs.end(), [&](const auto& kv) { return kv.first == param.name; });
    if (!present)
      return ToolError{ToolErrorKind::MissingArgument,
                       fmt::format("{}() missing required argument '{}'", name, param.name)};
  }

  if (name == "final_answer") return render_value(kwargs.front().second);
  if (!backend_) return ToolError{ToolErrorKind::BackendFailure, "no backend configured"};
  return backend_->call(*spec, kwargs, ctx);
}

namespace {

const char* type_label(ParamType t) { return t == ParamType::String ? "string" : "any"; }

}  // namespace

std::string render_tool_docs(const ToolRegistry& registry) {
  std::string out;
  for (const auto& spec : registry.specs()) {
    nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
    for (const auto& p : spec.inputs) {
      nlohmann::ordered_json param = {{"type", type_label(p.type)}, {"description", p.description}};
      if (!p.required) param["nullable"] = true;
      inputs[p.name] = std::move(param);
    }
    out += fmt::format("- {}: {}\n    Takes inputs: {}\n    Returns an output of type: {}\n", spec.name,
                       spec.description, inputs.dump(), type_label(spec.output_type));
  }
  return out;
}

ToolResult EpisodeTools::invoke(const std::string& name, const Kwargs& kwargs) {
  if (terminated_)
    return {ExecError{ExecErrorKind::ToolError,
                      ToolError{ToolErrorKind::Terminated, "final_answer was already submitted"}.describe()},
            {}};
  ToolReply reply = registry_.invoke(name, kwargs, ctx_);
  if (auto* err = std::get_if<ToolError>(&reply)) return {ExecError{ExecErrorKind::ToolError, err->describe()}, {}};
  ToolResult result{std::get<std::string>(std::move(reply)), {}};
  if (name == "final_answer") {
    terminated_ = true;
    answer_ = kwargs.front().second;
    result.final_value = answer_;
  }
  return result;
}

FixtureTable FixtureTable::from_json_text(std::string_view text) {
  auto doc = nlohmann::json::parse(text);
  FixtureTable table;
  for (const auto& e : doc.value("entries", nlohmann::json::array())) {
    FixtureEntry entry;
    entry.tool = e.at("tool").get<std::string>();
    if (e.contains("question_id")) entry.question_id = e.at("question_id").get<std::string>();
    const auto match = e.value("match", nlohmann::json::object());
    for (const auto& [k, v] : match.items()) entry.match[k] = v.get<std::string>();
    entry.response = e.value("response", "");
    if (e.contains("error")) {
      auto kind = e.at("error").get<std::string>();
      if (kind == "timeout") entry.error = ToolErrorKind::BackendTimeout;
      else if (kind == "failure") entry.error = ToolErrorKind::BackendFailure;
      else throw std::invalid_argument("fixture error must be 'timeout' or 'failure', got '" + kind + "'");
    }
    table.entries.push_back(std::move(entry));
  }
  const auto defaults = doc.value("defaults", nlohmann::json::object());
  for (const auto& [k, v] : defaults.items())
    table.defaults[k] = v.get<std::string>();
  return table;
}

FixtureTable FixtureTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fixture file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return from_json_text(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void FixtureTable::merge(const FixtureTable& other) {
  entries.insert(entries.end(), other.entries.begin(), other.entries.end());
  for (const auto& [k, v] : other.defaults) defaults.emplace(k, v);
}

ToolReply FixtureBackend::call(const ToolSpec& spec, const Kwargs& kwargs, const CallContext& ctx) {
  ++calls_;
  for (const auto& entry : table_.entries) {
    if (entry.tool != spec.name) continue;
    if (entry.question_id && *entry.question_id != ctx.question_id) continue;
    bool matched = true;
    for (const auto& [param, expected] : entry.match) {
      auto it = std::find_if(kwargs.begin(), kwargs.end(), [&](const auto& kv) { return kv.first == param; });
      if (it == kwargs.end() || render_value(it->second) != expected) {
        matched = false;
        break;
      }
    }
    if (!matched) continue;
    if (entry.error) return ToolError{*entry.error, entry.response.empty() ? "fixture error" : entry.response};
    return entry.response;
  }
  if (auto it = table_.defaults.find(spec.name); it != table_.defaults.end()) return it->second;
  return ToolError{ToolErrorKind::BackendFailure, fmt::format("no fixture response for {}", spec.name)};
}

}  // namespace toolr1

namespace toolr1 {

const std::string& default_system_prompt_template() {
  static const std::string prompt =
      "You are an assistant that solves tasks by writing short Python programs. The functions listed below are "
      "tools you may call from your code.\n"
      "\n"
      "Work in steps. Each step has two parts. Under 'Thought:' explain what you know so far and what you will do "
      "next. Under 'Code:' write a fenced ```py block and close it with ```<end_code>. Whatever your code prints "
      "comes back to you under 'Observation:' before the next step. When you know the answer, submit it by calling "
      "final_answer.\n"
      "\n"
      "Tools:\n"
      "{tool_docs}"
      "\n"
      "Rules:\n"
      "1. Every step needs a 'Thought:' part and a 'Code:' block ending with ```<end_code>.\n"
      "2. Only use variables you have assigned yourself.\n"
      "3. Pass tool arguments by keyword, e.g. web_qa(query=\"...\", question=\"...\"), never as a dict.\n"
      "4. When a tool's output format is unknown, print it and use it in the next step instead of feeding it to "
      "another tool in the same block.\n"
      "5. Do not repeat a tool call with identical arguments.\n"
      "6. Never assign to a tool name; final_answer is not a variable.\n"
      "7. Do not invent placeholder values; work from real results.\n"
      "8. Imports are limited to: {authorized_imports}.\n"
      "9. Variables and imports carry over from one step to the next.\n"
      "10. Keep going until you have an answer; solving the task is your job.\n";
  return prompt;
}

std::string render_system_prompt(std::string_view tmpl, const ToolRegistry& registry,
                                 const std::set<std::string>& authorized_imports) {
  std::string imports;
  for (const auto& m : authorized_imports) imports += (imports.empty() ? "" : ", ") + m;
  std::string out(tmpl);
  auto replace_all = [&out](std::string_view slot, const std::string& text) {
    for (std::size_t pos = 0; (pos = out.find(slot, pos)) != std::string::npos; pos += text.size())
      out.replace(pos, slot.size(), text);
  };
  replace_all("{tool_docs}", render_tool_docs(registry));
  replace_all("{authorized_imports}", imports);
  return out;
}

}  // namespace toolr1
