// Entry point: wires the REST snapshots and the push channel into the
// reducer and re-renders the dashboard on every state change.

import { ApiClient, ApiError } from "./api.js";
import { renderDashboard } from "./render.js";
import {
    ViewModel,
    initialViewModel,
    reduce,
    ViewEvent,
} from "./viewModel.js";
import { ResultsSocket } from "./wsClient.js";

export function startDashboard(root: HTMLElement, baseUrl = ""): void {
    const api = new ApiClient(baseUrl);
    let model: ViewModel = initialViewModel();

    const dispatch = (event: ViewEvent) => {
        model = reduce(model, event);
        root.innerHTML = renderDashboard(model);
    };

    const wsUrl =
        (baseUrl || window.location.origin).replace(/^http/, "ws") +
        "/ws/results";
    const socket = new ResultsSocket({
        url: wsUrl,
        onMessage: (message) => dispatch({ kind: "message", message }),
        onStateChange: (state) => {
            if (state === "open") {
                dispatch({ kind: "socket-open" });
                // refresh snapshots after every (re)connect
                void loadSnapshots();
            } else if (state === "stale") {
                dispatch({ kind: "socket-stale" });
            } else {
                dispatch({ kind: "socket-closed" });
            }
        },
    });

    async function loadSnapshots(): Promise<void> {
        try {
            dispatch({ kind: "tags-loaded", tags: await api.getTags() });
            dispatch({
                kind: "history-loaded",
                trials: await api.getTrials(),
            });
            dispatch({ kind: "config-loaded", config: await api.getConfig() });
        } catch (error) {
            if (error instanceof ApiError) {
                dispatch({ kind: "config-rejected", detail: error.detail });
            }
        }
    }

    dispatch({ kind: "socket-closed" });
    socket.connect();
}
