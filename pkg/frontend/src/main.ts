import { SessionApi } from "./api.js";
import { App } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const apiBase = params.get("api") ?? window.location.origin;
const contentUrl = params.get("content") ?? "./content.json";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

new App(new SessionApi(apiBase), root, contentUrl).start();
