import { ApiClient } from "./api.js";
import { ElicitationView } from "./elicitation_view.js";
import { FacilitatorView } from "./facilitator_view.js";

function param(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

function mount(): void {
  const baseUrl = param("api", "");
  const sessionId = param("session", "");
  const token = param("token", "");
  const role = param("role", "expert");
  const api = new ApiClient(baseUrl, token);

  const app = document.getElementById("app");
  if (!app) throw new Error("missing #app element");
  if (!sessionId || !token) {
    app.textContent = "open with ?session=<id>&token=<token>&role=expert|facilitator";
    return;
  }
  if (role === "facilitator") {
    app.appendChild(new FacilitatorView(api, sessionId).root);
  } else {
    const round = Number(param("round", "1"));
    const arm = param("arm", "high") === "low" ? "low" : "high";
    app.appendChild(new ElicitationView(api, sessionId, round, arm).root);
  }
}

window.addEventListener("DOMContentLoaded", mount);
