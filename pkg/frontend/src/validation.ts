/** Client-side mirror of the server's review validation.
 *
 * The server rejects a submission with a list of violated rule names;
 * this module reproduces that judgement so the UI can disable submit
 * (and explain why) before any request is made. Rule names match the
 * server's exactly.
 */

import type { Item, ReviewBody } from './types.js';
import { LAYER_CODES } from './types.js';

export interface Issue {
  rule: string;
  message: string;
}

export const RULE_MISSING_ANNOTATION = 'missing_annotation';
export const RULE_MISSING_CORRECTION = 'missing_correction';
export const RULE_UNKNOWN_DECISION = 'unknown_decision';
export const RULE_FLAGS_ON_NORMAL = 'flags_on_normal';
export const RULE_UNKNOWN_LAYER_CODE = 'unknown_layer_code';
export const RULE_MISSING_REVIEWER = 'missing_reviewer';

const KNOWN_CODES = new Set<string>(LAYER_CODES);

export function validateReview(item: Pick<Item, 'annotation'>, body: ReviewBody): Issue[] {
  const issues: Issue[] = [];
  if (!body.reviewer) {
    issues.push({ rule: RULE_MISSING_REVIEWER, message: 'reviewer id must be non-empty' });
  }
  if (body.decision === 'accept') {
    if (item.annotation === null) {
      issues.push({
        rule: RULE_MISSING_ANNOTATION,
        message: 'item has no model annotation to accept',
      });
    }
  } else if (body.decision === 'correct') {
    if (body.corrected === undefined) {
      issues.push({
        rule: RULE_MISSING_CORRECTION,
        message: 'correct decision needs a corrected label',
      });
    } else {
      for (const code of body.corrected.layers) {
        if (!KNOWN_CODES.has(code)) {
          issues.push({
            rule: RULE_UNKNOWN_LAYER_CODE,
            message: `unknown layer code ${code}`,
          });
        }
      }
      if (!body.corrected.anomalous && body.corrected.layers.length > 0) {
        issues.push({
          rule: RULE_FLAGS_ON_NORMAL,
          message: 'a normal scene cannot carry layer flags',
        });
      }
    }
  } else {
    issues.push({
      rule: RULE_UNKNOWN_DECISION,
      message: `unknown decision ${String(body.decision)}`,
    });
  }
  if (body.descriptions !== undefined) {
    for (const code of Object.keys(body.descriptions)) {
      if (!KNOWN_CODES.has(code)) {
        issues.push({
          rule: RULE_UNKNOWN_LAYER_CODE,
          message: `unknown layer code ${code} in descriptions`,
        });
      }
    }
  }
  return issues;
}
