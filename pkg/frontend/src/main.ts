import { App } from "./app.js";

// served by the same process as the API, so relative URLs work everywhere
const app = new App("");
app.bind();
