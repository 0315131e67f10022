// Pure HTML-string renderers: every panel is a function of the view model
// only, so a replayed message log produces byte-identical markup.

import {
    badgeFor,
    formatCompletedAt,
    formatSpeed,
    formatSpeedFull,
} from "./format.js";
import { TrialMessage } from "./types.js";
import { ViewModel } from "./viewModel.js";

function escapeHtml(text: string): string {
    return text
        .replace(/&/g, "&amp;")
        .replace(/</g, "&lt;")
        .replace(/>/g, "&gt;")
        .replace(/"/g, "&quot;");
}

function badgeHtml(trial: TrialMessage): string {
    const badge = badgeFor(trial.classification);
    return `<span class="badge ${badge.css}">${badge.text}</span>`;
}

function speedHtml(trial: TrialMessage): string {
    return (
        `<span class="speed" title="${formatSpeedFull(trial.speedMps)} m/s">` +
        `${formatSpeed(trial.speedMps)} m/s</span>`
    );
}

export function renderConnectionBanner(model: ViewModel): string {
    const labels = {
        connecting: "Connecting…",
        live: "Live",
        stale: "Connection stale — waiting for heartbeat",
        disconnected: "Disconnected — reconnecting",
    } as const;
    return (
        `<div class="banner banner-${model.connection}">` +
        `${labels[model.connection]}</div>`
    );
}

export function renderLiveResult(model: ViewModel): string {
    const latest = model.history[0];
    if (!latest) {
        return `<div class="live-result empty">No trials yet</div>`;
    }
    return (
        `<div class="live-result">` +
        `<div class="live-label">${escapeHtml(latest.label)}</div>` +
        speedHtml(latest) +
        badgeHtml(latest) +
        `</div>`
    );
}

export function renderTagPool(model: ViewModel): string {
    if (model.tags.length === 0) {
        return `<p class="empty">No tags registered</p>`;
    }
    const rows = model.tags.map((entry) => {
        const last = entry.lastResult;
        const activity = last
            ? `${speedHtml(last)} ${badgeHtml(last)} ` +
              `<time>${formatCompletedAt(last.completedAt)}</time>`
            : `<span class="empty">no activity</span>`;
        return (
            `<tr><td>${escapeHtml(entry.tag.label)}</td>` +
            `<td><code>${entry.tag.epc}</code></td>` +
            `<td>${activity}</td></tr>`
        );
    });
    return (
        `<table><thead><tr><th>Tag</th><th>EPC</th><th>Last trial</th>` +
        `</tr></thead><tbody>${rows.join("")}</tbody></table>`
    );
}

export function renderHistory(model: ViewModel): string {
    if (model.history.length === 0) {
        return `<p class="empty">No trial history</p>`;
    }
    const rows = model.history.map(
        (trial) =>
            `<tr><td><time>${formatCompletedAt(trial.completedAt)}</time></td>` +
            `<td>${escapeHtml(trial.label)}</td>` +
            `<td>${speedHtml(trial)}</td>` +
            `<td>${badgeHtml(trial)}</td>` +
            `<td>${trial.entrySamples}/${trial.exitSamples}</td></tr>`,
    );
    return (
        `<table><thead><tr><th>Completed</th><th>Tag</th><th>Speed</th>` +
        `<th>Outcome</th><th>Reads</th></tr></thead>` +
        `<tbody>${rows.join("")}</tbody></table>`
    );
}

export function renderConfig(model: ViewModel): string {
    if (!model.config) {
        return `<p class="empty">Configuration not loaded</p>`;
    }
    const p = model.config.params;
    const roles = Object.entries(model.config.portRoles)
        .map(([port, role]) => `port ${port} → ${escapeHtml(role)}`)
        .join(", ");
    const error = model.configError
        ? `<p class="config-error">${escapeHtml(model.configError)}</p>`
        : "";
    return (
        `<dl>` +
        `<dt>Windows</dt><dd>w1=${p.w1}, w2=${p.w2}</dd>` +
        `<dt>Drop thresholds</dt><dd>τ1=${p.tau1} dBm, ` +
        `τ2=${p.tau2} dBm</dd>` +
        `<dt>Antenna separation</dt><dd>${p.distanceM} m</dd>` +
        `<dt>Antenna roles</dt><dd>${roles}</dd>` +
        `<dt>Cooldown</dt><dd>${model.config.cooldownS} s</dd>` +
        `</dl>` +
        error
    );
}

export function renderDashboard(model: ViewModel): string {
    return (
        renderConnectionBanner(model) +
        `<section id="live">${renderLiveResult(model)}</section>` +
        `<section id="tags">${renderTagPool(model)}</section>` +
        `<section id="history">${renderHistory(model)}</section>` +
        `<section id="config">${renderConfig(model)}</section>`
    );
}
