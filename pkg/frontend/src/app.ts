import { renderMarkdown } from "./markdown.js";
import { ChatStore } from "./store.js";

const SESSION_KEY = "amdkg.session_id";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function mountApp(baseUrl = ""): ChatStore {
  const store = new ChatStore(baseUrl, localStorage.getItem(SESSION_KEY));
  const log = el<HTMLDivElement>("chat-log");
  const form = el<HTMLFormElement>("chat-form");
  const input = el<HTMLInputElement>("chat-input");
  const send = el<HTMLButtonElement>("chat-send");
  const newChat = el<HTMLButtonElement>("new-chat");

  function render(): void {
    if (store.sessionId) localStorage.setItem(SESSION_KEY, store.sessionId);
    send.disabled = store.pending;
    input.disabled = store.pending;
    log.replaceChildren(
      ...store.messages.map((message) => {
        const bubble = document.createElement("div");
        bubble.className = `bubble ${message.role}`
          + (message.pending ? " pending" : "")
          + (message.failed ? " failed" : "");
        const body = document.createElement("div");
        body.className = "body";
        body.innerHTML = renderMarkdown(message.text);
        bubble.appendChild(body);
        if (message.failed) {
          const retry = document.createElement("button");
          retry.textContent = "Retry";
          retry.className = "retry";
          retry.onclick = () => void store.retry();
          bubble.appendChild(retry);
        }
        if (message.evidence.length) {
          const panel = document.createElement("div");
          panel.className = "evidence";
          panel.textContent = `Sources: ${[...new Set(message.evidence)].join(", ")}`;
          bubble.appendChild(panel);
        }
        return bubble;
      }),
    );
    log.scrollTop = log.scrollHeight;
  }

  store.onChange = render;

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const question = input.value.trim();
    if (!question || store.pending) return;
    input.value = "";
    void store.sendQuestion(question);
  });

  newChat.addEventListener("click", () => {
    localStorage.removeItem(SESSION_KEY);
    store.newChat();
  });

  void store.restore();
  render();
  return store;
}

if (typeof document !== "undefined" && document.getElementById("chat-log")) {
  mountApp();
}
