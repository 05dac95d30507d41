// Tutor chat pane: question input plus the exchange history, newest last.
// History is never stored locally — it is rebuilt from server responses.

import { ApiClient, ApiError } from "./api.js";
import type { ExchangeDoc } from "./types.js";

export class ChatPaneView {
  readonly root: HTMLElement;
  private readonly api: ApiClient;
  private readonly history: HTMLElement;
  private readonly input: HTMLInputElement;
  private readonly send: HTMLButtonElement;
  private readonly error: HTMLElement;
  private readonly retry: HTMLButtonElement;
  private exchanges: ExchangeDoc[] = [];
  private activeNodeId: string | null = null;
  private lastFailedQuestion: string | null = null;

  constructor(root: HTMLElement, api: ApiClient) {
    this.root = root;
    this.api = api;
    root.classList.add("chat-pane");

    this.history = document.createElement("div");
    this.history.className = "chat-history";

    const form = document.createElement("form");
    form.className = "chat-form";
    this.input = document.createElement("input");
    this.input.type = "text";
    this.input.placeholder = "Ask the tutor…";
    this.send = document.createElement("button");
    this.send.type = "submit";
    this.send.textContent = "Send";
    this.send.disabled = true;
    form.append(this.input, this.send);

    this.error = document.createElement("div");
    this.error.className = "chat-error";
    this.error.hidden = true;
    this.retry = document.createElement("button");
    this.retry.type = "button";
    this.retry.textContent = "Retry";

    root.append(this.history, form, this.error);

    this.input.addEventListener("input", () => {
      this.send.disabled = this.input.value.trim() === "";
    });
    form.addEventListener("submit", (e) => {
      e.preventDefault();
      void this.submit(this.input.value);
    });
    this.retry.addEventListener("click", () => {
      if (this.lastFailedQuestion !== null) {
        void this.submit(this.lastFailedQuestion);
      }
    });
  }

  setActiveNode(nodeId: string): void {
    this.activeNodeId = nodeId;
  }

  getExchanges(): ExchangeDoc[] {
    return this.exchanges.slice();
  }

  setExchanges(exchanges: ExchangeDoc[]): void {
    this.exchanges = exchanges
      .slice()
      .sort((a, b) => a.created_at - b.created_at);
    this.render();
  }

  appendExchange(exchange: ExchangeDoc): void {
    if (this.exchanges.some((e) => e.id === exchange.id)) return;
    this.exchanges.push(exchange);
    this.render();
  }

  private render(): void {
    this.history.replaceChildren();
    for (const exchange of this.exchanges) {
      const entry = document.createElement("div");
      entry.className = "chat-exchange";
      entry.dataset.exchangeId = exchange.id;

      const question = document.createElement("p");
      question.className = "chat-question";
      question.textContent = exchange.context.question;

      const answer = document.createElement("p");
      answer.className = "chat-answer";
      answer.textContent = exchange.answer;

      const source = document.createElement("span");
      source.className = "chat-source";
      source.textContent = exchange.source;

      entry.append(question, answer, source);
      this.history.appendChild(entry);
    }
  }

  private async submit(question: string): Promise<void> {
    const trimmed = question.trim();
    if (trimmed === "" || this.activeNodeId === null) return;
    this.error.hidden = true;
    try {
      const exchange = await this.api.ask(this.activeNodeId, trimmed);
      this.lastFailedQuestion = null;
      this.input.value = "";
      this.send.disabled = true;
      this.appendExchange(exchange);
    } catch (err) {
      this.lastFailedQuestion = trimmed;
      this.error.replaceChildren();
      const msg = document.createElement("span");
      msg.textContent =
        err instanceof ApiError
          ? `Tutor unavailable (${err.code}).`
          : "Tutor unavailable.";
      this.error.append(msg, this.retry);
      this.error.hidden = false;
    }
  }
}
