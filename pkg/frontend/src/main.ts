// Entry point: connect to the service the page was served from (or
// ?api=http://host:port for a detached backend) and mount the dashboard.

import { ConsoleController } from "./controller.js";
import { ConsoleView } from "./view.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? "";

const controller = new ConsoleController(base, {
  onGalleryRefresh: () => view.refreshGallery(),
});
const view = new ConsoleView(controller);

view.mount();
view.refreshGallery();
void controller.connect();
