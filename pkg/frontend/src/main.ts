import { ApiClient } from "./api.js";
import { Panel } from "./ui.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");
new Panel(new ApiClient(), root);
