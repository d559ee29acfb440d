#include "arena/agents.hpp"
#include "arena/hashing.hpp"

namespace arena::agents {
namespace {

class LlmAgent : public Agent {
 public:
  LlmAgent(LlmSpec spec, PromptBundle prompt, gateway::ChatBackend& backend)
      : spec_(std::move(spec)), prompt_(std::move(prompt)), backend_(backend) {}

  AgentTurn next_message(const StateView& view) override {
    gateway::ChatRequest request;
    request.model_id = spec_.model_id;
    request.temperature = spec_.temperature;
    request.max_output_tokens = spec_.max_output_tokens;
    request.seed = mix_seed({view.seed, static_cast<std::uint64_t>(view.self)}) & 0x7fffffffULL;
    request.messages = conversation(view);

    AgentTurn turn;
    for (int attempt = 1; attempt <= kMaxParseAttempts; ++attempt) {
      gateway::ChatResponse response;
      try {
        response = backend_.complete(request);
      } catch (const gateway::GatewayError& e) {
        throw AgentFailure(std::string("gateway ") + std::string(gateway::to_string(e.kind())) + ": " + e.what(),
                           std::move(turn.failed_attempts), turn.usage, true);
      }
      turn.usage += response.usage;

      auto parsed = protocol::parse_message(response.content, view.kind, view.bounds, view.self);
      std::string problem;
      if (const auto* err = std::get_if<protocol::ParseError>(&parsed)) {
        problem = err->describe();
      } else if (auto why = games::phase_violation(view.phase, std::get<AgentMessage>(parsed).action)) {
        problem = *why;
      } else {
        turn.message = std::get<AgentMessage>(std::move(parsed));
        return turn;
      }
      turn.failed_attempts.push_back(response.content);
      request.messages.push_back({"assistant", response.content});
      request.messages.push_back({"user", "Your reply could not be used: " + problem +
                                              ". Reply again with a <rationale>...</rationale> block followed by "
                                              "exactly one valid action tag."});
    }
    throw AgentFailure("no usable reply after " + std::to_string(kMaxParseAttempts) + " attempts",
                       std::move(turn.failed_attempts), turn.usage, false);
  }

 private:
  // Alternating user/assistant history: the other player's messages arrive
  // as user turns, our own as assistant turns; the current turn prompt is
  // appended to the final user turn.
  std::vector<gateway::ChatMessage> conversation(const StateView& view) const {
    std::vector<gateway::ChatMessage> msgs{{"system", prompt_.system_prompt}};
    std::string pending_user;
    for (const auto& m : view.transcript) {
      if (m.speaker == view.self) {
        msgs.push_back({"user", pending_user.empty() ? std::string("The negotiation begins.") : pending_user});
        msgs.push_back({"assistant", m.raw_text});
        pending_user.clear();
      } else {
        if (!pending_user.empty()) pending_user += "\n\n";
        pending_user += "The other player said:\n" + m.raw_text;
      }
    }
    if (!pending_user.empty()) pending_user += "\n\n";
    pending_user += render_turn_prompt(prompt_, view);
    msgs.push_back({"user", std::move(pending_user)});
    return msgs;
  }

  LlmSpec spec_;
  PromptBundle prompt_;
  gateway::ChatBackend& backend_;
};

}  // namespace

std::unique_ptr<Agent> make_llm_agent(const LlmSpec& spec, PromptBundle prompt, gateway::ChatBackend& backend) {
  return std::make_unique<LlmAgent>(spec, std::move(prompt), backend);
}

std::unique_ptr<Agent> make_agent(const AgentSpec& spec, GameKind kind, const games::GameConfig& config,
                                  gateway::ChatBackend* backend) {
  if (const auto* s = std::get_if<ScriptedSpec>(&spec.kind)) return make_scripted_agent(*s);
  const auto& llm = std::get<LlmSpec>(spec.kind);
  if (backend == nullptr) throw std::invalid_argument("LLM agent '" + llm.model_id + "' needs a chat backend");
  return make_llm_agent(llm, build_prompt(kind, config, spec.role, llm.framing), *backend);
}

}  // namespace arena::agents
