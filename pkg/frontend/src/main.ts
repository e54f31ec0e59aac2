import { ApiClient, fetchTransport } from "./api.js";
import { ChatController } from "./controller.js";
import { render } from "./render.js";

const controller = new ChatController(new ApiClient(fetchTransport()));
const root = document.getElementById("app")!;
const input = document.getElementById("message") as HTMLInputElement;
const sendButton = document.getElementById("send") as HTMLButtonElement;

const handlers = {
  onForce: (intention: number) => controller.force(intention),
  onRetry: () => void send(),
  onNewSession: () => void controller.newSession(),
};

controller.subscribe((view) => {
  render(root, view, handlers);
  sendButton.disabled = view.connection === "busy" || !input.value.trim();
});

async function send(): Promise<void> {
  const text = input.value.trim();
  if (!text) return;
  input.value = "";
  sendButton.disabled = true;
  await controller.send(text);
  input.focus();
}

sendButton.addEventListener("click", () => void send());
input.addEventListener("keydown", (event) => {
  if (event.key === "Enter") void send();
});
input.addEventListener("input", () => {
  sendButton.disabled =
    controller.view.connection === "busy" || !input.value.trim();
});

void controller.newSession();
