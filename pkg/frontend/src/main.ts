import { ReviewApi } from "./api.js";
import { createApp } from "./app.js";

const root = document.getElementById("app");
if (root) {
  const app = createApp(root, new ReviewApi());
  window.addEventListener("keydown", (e) => app.handleKey(e));
  void app.queue.load();
}
