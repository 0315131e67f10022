import { Classification } from "./types.js";

// Clinical display convention: speeds to 2 decimals; full precision stays
// available in tooltips/exports via formatSpeedFull.

export function formatSpeed(speedMps: number): string {
    return speedMps.toFixed(2);
}

export function formatSpeedFull(speedMps: number): string {
    return String(speedMps);
}

// The badge derives from the classification field alone.
const BADGES: Record<Classification, { css: string; text: string }> = {
    success: { css: "badge-success", text: "Success" },
    erroneous: { css: "badge-erroneous", text: "Erroneous" },
    systemFailure: { css: "badge-failure", text: "System failure" },
};

export function badgeFor(classification: Classification) {
    return BADGES[classification];
}

// Rendered in UTC so the same trial log produces the same markup on every
// client machine.
export function formatCompletedAt(rfc3339: string): string {
    const date = new Date(rfc3339);
    if (isNaN(date.getTime())) {
        return rfc3339;
    }
    return date.toISOString().replace("T", " ").slice(0, 19) + " UTC";
}
